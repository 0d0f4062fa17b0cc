#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::OperatorSum;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(op) = OperatorSum::from_text(text) {
            // accepted input must survive a serialization round trip
            let again = OperatorSum::from_text(&op.to_text()).expect("round trip");
            assert_eq!(op.terms().len(), again.terms().len());
        }
    }
});
