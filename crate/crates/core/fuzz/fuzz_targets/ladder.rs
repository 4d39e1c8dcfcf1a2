#![no_main]

use gbsde::approx::check_ladder;
use gbsde::experiments::config::parse_ladder;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(ladder) = parse_ladder(s) {
            let _ = check_ladder(&ladder, 1.0);
        }
    }
});
