//! Replays the checked-in fuzz seeds through the parsers.

use std::path::PathBuf;

use densecorr::corrset::{build_dataset, parse_annotations, Split};
use densecorr::embedding::EmbeddingModel;
use densecorr::geometry::{parse_obj, parse_obj_bytes, write_obj, Mesh};

fn seed(target: &str, name: &str) -> Vec<u8> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "../../fuzz/corpus", target, name]
        .iter()
        .collect();
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn tetra(id: &str) -> densecorr::Result<Mesh> {
    Mesh::new(
        id,
        vec![
            [0.0, 0.0, 0.0].into(),
            [1.0, 0.0, 0.0].into(),
            [0.0, 1.0, 0.0].into(),
            [0.0, 0.0, 1.0].into(),
        ],
        vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
    )
}

#[test]
fn obj_seeds() {
    for name in [
        "mug.obj",
        "tetra.obj",
        "quad_slashes.obj",
        "negative_index.obj",
        "huge.obj",
    ] {
        let mesh = parse_obj_bytes(&seed("obj", name), "seed").unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = parse_obj(&write_obj(&mesh), "seed").unwrap();
        assert_eq!(again.faces(), mesh.faces(), "{name}");
        assert_eq!(again.vertices(), mesh.vertices(), "{name}");
    }
    assert_eq!(
        parse_obj_bytes(&seed("obj", "negative_index.obj"), "s")
            .unwrap()
            .faces(),
        &[[0, 1, 2]]
    );
    for name in ["bad_index.obj", "nan.obj"] {
        assert!(parse_obj_bytes(&seed("obj", name), "seed").is_err(), "{name}");
    }
}

#[test]
fn annotation_seeds() {
    for name in ["mugs.json", "tetra.json"] {
        let file = parse_annotations(&seed("annotations", name)).unwrap();
        let dataset = build_dataset(&file, |r| tetra(&r.id));
        if name == "tetra.json" {
            // parses, but its second set spans a single model
            let err = dataset.unwrap_err().to_string();
            assert!(err.contains("at least 2"), "{err}");
        }
    }
    for name in ["duplicate_ids.json", "unknown_model.json"] {
        let bytes = seed("annotations", name);
        let rejected = match parse_annotations(&bytes) {
            Err(_) => true,
            Ok(file) => build_dataset(&file, |r| tetra(&r.id)).is_err(),
        };
        assert!(rejected, "{name}");
    }
}

#[test]
fn split_seeds() {
    let split = Split::from_json(&seed("split", "split.json")).unwrap();
    assert_eq!(split.train, ["mugs_002"]);
    assert_eq!(Split::from_json(split.to_json().as_bytes()).unwrap(), split);
    for name in ["overlap.json", "unknown_key.json"] {
        assert!(Split::from_json(&seed("split", name)).is_err(), "{name}");
    }
}

#[test]
fn model_blob_seeds() {
    let bytes = seed("model_blob", "free_table.dcemb");
    let model = EmbeddingModel::decode(&bytes).unwrap();
    assert_eq!(model.encode(), bytes);
    for name in ["short_header.dcemb", "truncated.dcemb"] {
        assert!(
            EmbeddingModel::decode(&seed("model_blob", name)).is_err(),
            "{name}"
        );
    }
}
