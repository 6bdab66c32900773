#![no_main]

use densecorr::corrset::{build_dataset, parse_annotations};
use densecorr::geometry::Mesh;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = parse_annotations(data) {
        // validate against a fixed tetrahedron for every referenced mesh
        let _ = build_dataset(&file, |record| {
            Mesh::new(
                record.id.as_str(),
                vec![
                    [0.0, 0.0, 0.0].into(),
                    [1.0, 0.0, 0.0].into(),
                    [0.0, 1.0, 0.0].into(),
                    [0.0, 0.0, 1.0].into(),
                ],
                vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
            )
        });
    }
});
