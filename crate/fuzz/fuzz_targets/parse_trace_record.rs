#![no_main]

use libfuzzer_sys::fuzz_target;
use pemsim::harness::{parse_trace_record, trace_from_records};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_trace_record(line) {
        let text = serde_json::to_string(&record).unwrap();
        let again = parse_trace_record(&text).expect("a written record must parse");
        assert_eq!(record, again);
        let _ = trace_from_records(&[record]);
    }
});
