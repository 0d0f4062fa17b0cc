#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::linopt::{parse_mode_unitary, write_mode_unitary};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(u) = parse_mode_unitary(text) {
            let again = parse_mode_unitary(&write_mode_unitary(&u)).expect("round trip");
            assert_eq!(u.dim(), again.dim());
        }
    }
});
