#![no_main]

use gbsde::experiments::report::{read_checks_csv, write_checks_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(rows) = read_checks_csv(s) {
            let text = write_checks_csv(&rows).unwrap();
            assert_eq!(read_checks_csv(&text).unwrap().len(), rows.len());
        }
    }
});
