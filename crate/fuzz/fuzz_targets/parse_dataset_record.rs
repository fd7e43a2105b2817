#![no_main]

use libfuzzer_sys::fuzz_target;
use pemsim::harness::parse_dataset_record;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_dataset_record(line) {
        let text = serde_json::to_string(&record).unwrap();
        let again = parse_dataset_record(&text).expect("a written record must parse");
        assert_eq!(record, again);
        let _ = record.tuple();
    }
});
