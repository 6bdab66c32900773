#![no_main]

use densecorr_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = RunConfig::from_toml(text) {
            if let Ok(written) = config.to_toml() {
                assert_eq!(RunConfig::from_toml(&written).unwrap(), config);
            }
        }
    }
});
