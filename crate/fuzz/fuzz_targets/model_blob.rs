#![no_main]

use densecorr::embedding::EmbeddingModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = EmbeddingModel::decode(data) {
        let again = EmbeddingModel::decode(&model.encode()).expect("encoded model decodes");
        assert_eq!(again.parameter_count(), model.parameter_count());
    }
});
