//! On-disk annotation schema: one JSON document per category plus OBJ meshes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{
    CorrespondenceSet, Dataset, Hyperpoint, ModelEntry, SemanticPoint, SetEntry, SymmetryMode,
};
use crate::error::{Error, Result};
use crate::geometry::{load_mesh, unit_sphere_normalization, write_obj, Mesh, Point3};

pub const ANNOTATION_FILE: &str = "annotations.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub category: String,
    pub symmetry_mode: SymmetryMode,
    pub models: Vec<ModelRecord>,
    pub sets: Vec<SetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub id: String,
    pub mesh: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetRecord {
    pub set_id: u32,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub model: String,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub face: Option<usize>,
    #[serde(default)]
    pub uv: Option<[f64; 2]>,
    #[serde(default)]
    pub rgb: Option<[f64; 3]>,
}

/// Decodes the annotation JSON without touching geometry.
pub fn parse_annotations(bytes: &[u8]) -> Result<AnnotationFile> {
    serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))
}

/// Resolves model references, normalizes every mesh to the unit sphere and
/// moves annotation coordinates with their mesh.
pub fn build_dataset(
    file: &AnnotationFile,
    mut load: impl FnMut(&ModelRecord) -> Result<Mesh>,
) -> Result<Dataset> {
    let mut index = BTreeMap::new();
    let mut models = Vec::with_capacity(file.models.len());
    let mut norms = Vec::with_capacity(file.models.len());
    for (i, record) in file.models.iter().enumerate() {
        if index.insert(record.id.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate model id `{}`", record.id)));
        }
        let raw = load(record)?;
        let norm = unit_sphere_normalization(&raw)?;
        let mesh = raw.map_vertices(|v| norm.apply(v)).with_model_id(&record.id);
        models.push(ModelEntry {
            id: record.id.clone(),
            mesh_path: record.mesh.clone(),
            mesh,
        });
        norms.push(norm);
    }

    let mut sets = Vec::with_capacity(file.sets.len());
    for set in &file.sets {
        let mut entries = Vec::with_capacity(set.entries.len());
        for entry in &set.entries {
            let &model = index
                .get(entry.model.as_str())
                .ok_or_else(|| Error::UnknownModel(entry.model.clone()))?;
            let members = entry
                .points
                .iter()
                .map(|p| {
                    if !p.xyz.iter().all(|c| c.is_finite()) {
                        return Err(Error::Schema(format!(
                            "set {}: non-finite coordinate",
                            set.set_id
                        )));
                    }
                    Ok(SemanticPoint {
                        position: norms[model].apply(&Point3::from(p.xyz)),
                        face: p.face,
                        uv: p.uv,
                        color: p.rgb,
                        cloud_index: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let point = Hyperpoint::new(members).map_err(|_| {
                Error::Schema(format!(
                    "set {} entry for `{}` has no points",
                    set.set_id, entry.model
                ))
            })?;
            entries.push(SetEntry { model, point });
        }
        sets.push(CorrespondenceSet::new(set.set_id, entries)?);
    }
    Dataset::new(file.category.clone(), file.symmetry_mode, models, sets)
}

/// Reads an annotation file and the OBJ meshes it references.
pub fn parse_dataset(path: impl AsRef<Path>, geometry_dir: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let geometry_dir = geometry_dir.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = parse_annotations(&bytes)?;
    build_dataset(&file, |record| load_mesh(geometry_dir.join(&record.mesh)))
}

/// Annotation records of a dataset in its normalized frame.
pub fn annotation_file(dataset: &Dataset) -> AnnotationFile {
    AnnotationFile {
        category: dataset.category().to_string(),
        symmetry_mode: dataset.symmetry_mode(),
        models: dataset
            .models()
            .iter()
            .map(|m| ModelRecord {
                id: m.id.clone(),
                mesh: m.mesh_path.clone(),
            })
            .collect(),
        sets: dataset
            .sets()
            .iter()
            .map(|s| SetRecord {
                set_id: s.set_id(),
                entries: s
                    .entries()
                    .iter()
                    .map(|e| EntryRecord {
                        model: dataset.models()[e.model].id.clone(),
                        points: e
                            .point
                            .members()
                            .iter()
                            .map(|p| PointRecord {
                                xyz: [p.position.x, p.position.y, p.position.z],
                                face: p.face,
                                uv: p.uv,
                                rgb: p.color,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Writes `annotations.json` and every mesh under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for m in dataset.models() {
        write_file(&dir.join(&m.mesh_path), write_obj(&m.mesh).as_bytes())?;
    }
    let json = serde_json::to_vec_pretty(&annotation_file(dataset))?;
    write_file(&dir.join(ANNOTATION_FILE), &json)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_mesh(offset: f64) -> Mesh {
        Mesh::new(
            "raw",
            vec![
                Point3::new(offset, 0.0, 0.0),
                Point3::new(offset + 2.0, 0.0, 0.0),
                Point3::new(offset, 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    const MINIMAL: &str = r#"{
        "category": "demo",
        "symmetry_mode": "none",
        "models": [{"id": "a", "mesh": "a.obj"}, {"id": "b", "mesh": "b.obj"}],
        "sets": [{"set_id": 1, "entries": [
            {"model": "a", "points": [{"xyz": [0.5, 0.5, 0.0], "face": 0, "uv": null, "rgb": null}]},
            {"model": "b", "points": [{"xyz": [3.5, 0.5, 0.0], "face": null, "uv": [0.1, 0.2], "rgb": [1, 0, 0]}]}
        ]}]
    }"#;

    #[test]
    fn minimal_file() {
        let file = parse_annotations(MINIMAL.as_bytes()).unwrap();
        let ds = build_dataset(&file, |r| Ok(triangle_mesh(if r.id == "a" { 0.0 } else { 3.0 }))).unwrap();
        assert_eq!(ds.models().len(), 2);
        assert_eq!(ds.sets().len(), 1);
        assert_eq!(ds.models()[1].mesh.model_id(), "b");
        // the annotation moved with its mesh
        let pa = ds.sets()[0].entry_for(0).unwrap().members()[0].position;
        let pb = ds.sets()[0].entry_for(1).unwrap().members()[0].position;
        assert!((pa - pb).norm() < 1e-12);
    }

    #[test]
    fn unknown_model_is_named() {
        let text = MINIMAL.replace(r#""model": "b""#, r#""model": "zebra""#);
        let file = parse_annotations(text.as_bytes()).unwrap();
        let err = build_dataset(&file, |_| Ok(triangle_mesh(0.0))).unwrap_err();
        assert!(matches!(&err, Error::UnknownModel(id) if id == "zebra"));
        assert!(err.to_string().contains("zebra"));
    }

    #[test]
    fn single_model_set_rejected() {
        let text = MINIMAL.replace(r#""model": "b""#, r#""model": "a""#);
        let file = parse_annotations(text.as_bytes()).unwrap();
        assert!(build_dataset(&file, |_| Ok(triangle_mesh(0.0))).is_err());
    }

    #[test]
    fn hyperpoint_requires_symmetry_mode() {
        let text = MINIMAL.replace(
            r#"[{"xyz": [0.5, 0.5, 0.0], "face": 0, "uv": null, "rgb": null}]"#,
            r#"[{"xyz": [0.5, 0.5, 0.0]}, {"xyz": [0.2, 0.5, 0.0]}]"#,
        );
        let file = parse_annotations(text.as_bytes()).unwrap();
        assert!(build_dataset(&file, |_| Ok(triangle_mesh(0.0))).is_err());
        let central = text.replace(r#""none""#, r#""central""#);
        let file = parse_annotations(central.as_bytes()).unwrap();
        let ds = build_dataset(&file, |r| Ok(triangle_mesh(if r.id == "a" { 0.0 } else { 3.0 }))).unwrap();
        assert_eq!(ds.sets()[0].entry_for(0).unwrap().members().len(), 2);
    }

    #[test]
    fn schema_violations() {
        assert!(parse_annotations(b"{}").is_err());
        assert!(parse_annotations(MINIMAL.replace("set_id", "sid").as_bytes()).is_err());
        assert!(parse_annotations(MINIMAL.replace("\"none\"", "\"spiral\"").as_bytes()).is_err());
        let bad_face = MINIMAL.replace(r#""face": 0"#, r#""face": 7"#);
        let file = parse_annotations(bad_face.as_bytes()).unwrap();
        assert!(build_dataset(&file, |_| Ok(triangle_mesh(0.0))).is_err());
    }
}
