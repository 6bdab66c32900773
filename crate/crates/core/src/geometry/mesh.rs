use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Triangle mesh with validated face indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    model_id: String,
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(
        model_id: impl Into<String>,
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&idx| idx >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} references vertex {bad} but mesh has {} vertices",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} is degenerate: {f:?}")));
            }
        }
        Ok(Mesh {
            model_id: model_id.into(),
            vertices,
            faces,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Applies `f` to every vertex, keeping the topology.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Mesh {
        Mesh {
            model_id: self.model_id.clone(),
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Mesh {
        self.model_id = model_id.into();
        self
    }

    /// Closest face to `p` and the distance to it. Linear scan.
    pub fn locate(&self, p: &Vector3<f64>) -> Option<(usize, f64)> {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (f, (closest_point_on_triangle(p, &a, &b, &c) - p).norm())
            })
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Parses Wavefront OBJ text. Only `v` and `f` records are interpreted;
/// polygons are fan-triangulated around their first vertex.
pub fn parse_obj(text: &str, model_id: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok = tokens.next().ok_or_else(|| Error::Obj {
                        line,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|_| Error::Obj {
                        line,
                        message: format!("bad coordinate `{tok}`"),
                    })?;
                    if !c.is_finite() {
                        return Err(Error::Obj {
                            line,
                            message: format!("non-finite coordinate `{tok}`"),
                        });
                    }
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx = tokens
                    .map(|tok| resolve_face_index(tok, vertices.len(), line))
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(Error::Obj {
                        line,
                        message: format!("face needs at least 3 vertices, got {}", idx.len()),
                    });
                }
                for w in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::Obj {
            line: 0,
            message: "file contains no vertices".into(),
        });
    }
    Mesh::new(model_id, vertices, faces)
}

/// Byte-level entry point; rejects non-UTF-8 input.
pub fn parse_obj_bytes(bytes: &[u8], model_id: &str) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Obj {
        line: 0,
        message: format!("not utf-8: {e}"),
    })?;
    parse_obj(text, model_id)
}

fn resolve_face_index(tok: &str, vertex_count: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::Obj {
        line,
        message: format!("bad face index `{tok}`"),
    })?;
    let resolved = if raw > 0 {
        (raw - 1) as u64
    } else if raw < 0 {
        let back = raw.unsigned_abs();
        if back > vertex_count as u64 {
            return Err(Error::Obj {
                line,
                message: format!("relative index {raw} before start of vertex list"),
            });
        }
        vertex_count as u64 - back
    } else {
        return Err(Error::Obj {
            line,
            message: "face index 0 is invalid (indices are 1-based)".into(),
        });
    };
    if resolved >= vertex_count as u64 {
        return Err(Error::Obj {
            line,
            message: format!("face index {raw} exceeds vertex count {vertex_count}"),
        });
    }
    Ok(resolved as usize)
}

/// Loads an OBJ file; the model id is the file stem.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, &id)
}

/// Serializes to OBJ with round-trip exact coordinates.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Similarity transform `p -> (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.center) / self.scale
    }
}

/// Vertex centroid to the origin, farthest vertex to norm 1.
pub fn unit_sphere_normalization(mesh: &Mesh) -> Result<Normalization> {
    let n = mesh.vertices().len() as f64;
    let center = mesh.vertices().iter().fold(Vector3::zeros(), |acc, v| acc + v) / n;
    let scale = mesh
        .vertices()
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0_f64, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate(format!(
            "mesh `{}` has zero extent",
            mesh.model_id()
        )));
    }
    Ok(Normalization { center, scale })
}

pub fn normalize_unit_sphere(mesh: &Mesh) -> Result<Mesh> {
    let norm = unit_sphere_normalization(mesh)?;
    Ok(mesh.map_vertices(|v| norm.apply(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "tri").unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let mesh = parse_obj(text, "quad").unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_and_relative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2//3 -1\n";
        let mesh = parse_obj(text, "m").unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn malformed_faces_are_rejected() {
        for bad in [
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n",
            "v 0 0\n",
            "# nothing\n",
        ] {
            assert!(parse_obj(bad, "m").is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn write_parse_round_trip() {
        let mesh = Mesh::new(
            "m",
            vec![
                Vector3::new(0.1, -0.2, 1.0 / 3.0),
                Vector3::new(1e-17, 2.5, 0.0),
                Vector3::new(-7.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(parse_obj(&write_obj(&mesh), "m").unwrap(), mesh);
    }

    #[test]
    fn cube_normalization() {
        let mut verts = Vec::new();
        for x in [-2.0, 2.0] {
            for y in [-2.0, 2.0] {
                for z in [-2.0, 2.0] {
                    verts.push(Vector3::new(x, y, z));
                }
            }
        }
        let mesh = Mesh::new("cube", verts, vec![[0, 1, 2]]).unwrap();
        let n = normalize_unit_sphere(&mesh).unwrap();
        for v in n.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_is_removed() {
        let mesh = Mesh::new(
            "t",
            vec![
                Vector3::new(5.0, 5.0, 6.0),
                Vector3::new(5.0, 5.0, 4.0),
                Vector3::new(6.0, 5.0, 5.0),
                Vector3::new(4.0, 5.0, 5.0),
            ],
            vec![[0, 2, 1], [0, 1, 3]],
        )
        .unwrap();
        let n = normalize_unit_sphere(&mesh).unwrap();
        assert_eq!(n.vertices()[0], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(n.vertices()[3], Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn zero_extent_is_an_error() {
        let mesh = Mesh::new("p", vec![Vector3::new(1.0, 1.0, 1.0); 3], vec![]).unwrap();
        assert!(matches!(normalize_unit_sphere(&mesh), Err(Error::Degenerate(_))));
    }

    #[test]
    fn closest_point_regions() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        let inside = Vector3::new(0.25, 0.25, 3.0);
        assert_eq!(
            closest_point_on_triangle(&inside, &a, &b, &c),
            Vector3::new(0.25, 0.25, 0.0)
        );
        let past_b = Vector3::new(2.0, -1.0, 0.0);
        assert_eq!(closest_point_on_triangle(&past_b, &a, &b, &c), b);
        let edge = Vector3::new(1.0, 1.0, 0.0);
        let q = closest_point_on_triangle(&edge, &a, &b, &c);
        assert!((q - Vector3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
