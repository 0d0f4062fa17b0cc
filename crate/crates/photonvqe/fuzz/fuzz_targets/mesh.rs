#![no_main]

use libfuzzer_sys::fuzz_target;
use photonvqe::linopt::{parse_mesh, write_mesh};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = parse_mesh(text) {
            let again = parse_mesh(&write_mesh(&mesh)).expect("round trip");
            assert_eq!(mesh.elements.len(), again.elements.len());
            assert_eq!(mesh.output_phases.len(), again.output_phases.len());
        }
    }
});
