#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::noise_mitigation::ConfusionMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = ConfusionMatrix::from_csv(text) {
            let again = ConfusionMatrix::from_csv(&m.to_csv()).expect("round trip");
            assert_eq!(m.dim(), again.dim());
        }
    }
});
