#![no_main]

use libfuzzer_sys::fuzz_target;
use softmax_newton::SparseDiagonal;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = SparseDiagonal::parse(text) {
            assert_eq!(SparseDiagonal::parse(&s.to_text()).expect("round trip"), s);
        }
    }
});
