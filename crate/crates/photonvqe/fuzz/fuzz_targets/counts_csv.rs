#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::measurement::Counts;

fuzz_target!(|data: &[u8]| {
    // first byte selects the distribution dimension, the rest is the CSV
    if data.is_empty() {
        return;
    }
    let dim = (data[0] as usize % 16) + 1;
    if let Ok(text) = std::str::from_utf8(&data[1..]) {
        if let Ok(c) = Counts::from_csv(text, dim) {
            let again = Counts::from_csv(&c.to_csv(), dim).expect("round trip");
            assert_eq!(c.to_csv(), again.to_csv());
        }
    }
});
