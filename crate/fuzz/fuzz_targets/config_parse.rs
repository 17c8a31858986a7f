#![no_main]

use kronfeat::harness::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // parsing must never panic; accepted configs must survive a round trip
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let json = serde_json::to_string(&cfg).expect("valid config serializes");
        let again = ExperimentConfig::from_json(&json).expect("serialized config parses");
        assert_eq!(again.experiment, cfg.experiment);
        assert_eq!(again.methods.len(), cfg.methods.len());
    }
});
