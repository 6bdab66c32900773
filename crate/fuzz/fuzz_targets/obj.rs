#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = densecorr::geometry::parse_obj_bytes(data, "fuzz") {
        // whatever parses must survive a write/parse round trip
        let again = densecorr::geometry::parse_obj(&densecorr::geometry::write_obj(&mesh), "fuzz")
            .expect("written OBJ parses");
        assert_eq!(again.faces(), mesh.faces());
    }
});
