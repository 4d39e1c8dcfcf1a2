#![no_main]

use gbsde::experiments::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = ExperimentConfig::from_json_str(s) {
            // an accepted document survives a round trip
            let again = serde_json::to_string(&c).unwrap();
            assert_eq!(ExperimentConfig::from_json_str(&again).unwrap(), c);
        }
    }
});
