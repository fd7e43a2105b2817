#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = pemsim::harness::parse_config(text) {
        // Anything accepted must be hashable and buildable.
        let _ = cfg.hash();
        let _ = cfg.planner.build();
        let _ = cfg.scenario_for(0);
    }
});
