#![no_main]

use libfuzzer_sys::fuzz_target;
use softmax_newton::io::{parse_vector, write_vector};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = parse_vector(text) {
            let again = parse_vector(&write_vector(&v)).expect("written vector parses");
            assert_eq!(v, again);
        }
    }
});
