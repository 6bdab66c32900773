#![no_main]

use densecorr::corrset::Split;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(split) = Split::from_json(data) {
        assert_eq!(Split::from_json(split.to_json().as_bytes()).unwrap(), split);
    }
});
