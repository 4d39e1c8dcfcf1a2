#![no_main]

use gbsde::experiments::report::RunReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = RunReport::from_json_str(s) {
            let again = RunReport::from_json_str(&r.to_json().unwrap()).unwrap();
            assert_eq!(again.checks.len(), r.checks.len());
            let _ = r.to_csv();
        }
    }
});
