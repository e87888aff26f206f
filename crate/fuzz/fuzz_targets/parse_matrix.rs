#![no_main]

use libfuzzer_sys::fuzz_target;
use softmax_newton::io::{parse_matrix, write_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_matrix(text) {
            let again = parse_matrix(&write_matrix(&m)).expect("written matrix parses");
            assert_eq!(m, again);
        }
    }
});
