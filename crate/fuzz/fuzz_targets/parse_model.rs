#![no_main]

use libfuzzer_sys::fuzz_target;
use pemsim::surrogates::{model_to_string, parse_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_model(text) {
        let again = parse_model(&model_to_string(&model)).expect("a written model must parse");
        assert_eq!(model, again);
    }
});
