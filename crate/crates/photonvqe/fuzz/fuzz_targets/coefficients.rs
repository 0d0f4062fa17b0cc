#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::hamiltonians::parse_coefficients;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = parse_coefficients(text) {
            // every parsed row must build a Hermitian operator without panicking
            for row in 0..table.rows.len() {
                let _ = table.hamiltonian(row);
            }
        }
    }
});
