//! Procedural shape families with exactly tracked landmarks.
//!
//! Every family is assembled from boxes and surfaces of revolution in a
//! z-up frame. Landmarks are placed on part surfaces analytically, so the
//! same semantic location is known on every deformed instance.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{
    build_dataset, write_file, AnnotationFile, EntryRecord, ModelRecord, PointRecord, SetRecord,
    ANNOTATION_FILE,
};
use super::types::{Dataset, SymmetryMode};
use crate::error::{Error, Result};
use crate::geometry::{parse_obj, write_obj, Mesh, Point3};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATHE_SEGMENTS: usize = 32;
const SURFACE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Tables,
    Rockets,
    Mugs,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Tables, Family::Rockets, Family::Mugs];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tables => "tables",
            Family::Rockets => "rockets",
            Family::Mugs => "mugs",
        }
    }

    /// Landmark names in set order.
    pub fn landmark_names(self) -> &'static [&'static str] {
        match self {
            Family::Tables => &[
                "top_corner",
                "leg_foot",
                "leg_top",
                "top_center",
                "edge_x",
                "under_center",
                "edge_y",
                "leg_mid",
                "under_quarter",
                "top_quarter",
            ],
            Family::Rockets => &[
                "nose_tip",
                "fin_tip_low",
                "fin_root_top",
                "shoulder",
                "body_base",
                "nozzle_bottom",
                "body_mid",
                "fin_tip_high",
                "nose_mid",
                "nozzle_rim",
            ],
            Family::Mugs => &[
                "handle_top",
                "rim_front",
                "base_center",
                "handle_bottom",
                "rim_side",
                "inner_bottom",
                "handle_outer",
                "wall_back",
                "base_edge",
                "rim_back",
            ],
        }
    }

    fn build(self, rng: &mut ChaCha8Rng) -> Shape {
        match self {
            Family::Tables => table(rng),
            Family::Rockets => rocket(rng),
            Family::Mugs => mug(rng),
        }
    }

    fn symmetric_copies(self, mode: SymmetryMode, p: Point3) -> Vec<Point3> {
        let half_turn = |p: Point3| Point3::new(-p.x, -p.y, p.z);
        let quarter_turn = |p: Point3| Point3::new(-p.y, p.x, p.z);
        let (central, rotational) = match mode {
            SymmetryMode::None => (false, false),
            SymmetryMode::Central => (true, false),
            SymmetryMode::Rotational => (false, true),
            SymmetryMode::Both => (true, true),
        };
        let mut out = vec![p];
        match self {
            Family::Mugs => {}
            Family::Tables => {
                if central || rotational {
                    out.push(half_turn(p));
                }
            }
            Family::Rockets => {
                if rotational {
                    let mut q = p;
                    for _ in 0..3 {
                        q = quarter_turn(q);
                        out.push(q);
                    }
                } else if central {
                    out.push(half_turn(p));
                }
            }
        }
        let mut unique: Vec<Point3> = Vec::with_capacity(out.len());
        for q in out {
            if unique.iter().all(|u| (u - q).norm() > 1e-12) {
                unique.push(q);
            }
        }
        unique
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Part {
    name: &'static str,
    min: Point3,
    max: Point3,
}

#[derive(Debug, Clone, PartialEq)]
struct Landmark {
    part: usize,
    position: Point3,
}

/// A raw generated instance before normalization.
#[derive(Debug, Clone)]
struct Shape {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    parts: Vec<Part>,
    landmarks: Vec<Landmark>,
    params: BTreeMap<String, f64>,
}

impl Shape {
    fn new() -> Self {
        Shape {
            vertices: Vec::new(),
            faces: Vec::new(),
            parts: Vec::new(),
            landmarks: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    fn param(&mut self, rng: &mut ChaCha8Rng, name: &str, lo: f64, hi: f64) -> f64 {
        let v = rng.gen_range(lo..hi);
        self.params.insert(name.to_string(), v);
        v
    }

    fn add_box(&mut self, name: &'static str, min: Point3, max: Point3) -> usize {
        let b = self.vertices.len();
        for i in 0..8 {
            self.vertices.push(Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            ));
        }
        const QUADS: [[usize; 4]; 6] = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        for q in QUADS {
            self.faces.push([b + q[0], b + q[1], b + q[2]]);
            self.faces.push([b + q[0], b + q[2], b + q[3]]);
        }
        self.parts.push(Part { name, min, max });
        self.parts.len() - 1
    }

    /// Surface of revolution about the z axis through a `(radius, z)`
    /// profile. Zero-radius profile points become a single axis vertex.
    fn add_lathe(&mut self, name: &'static str, profile: &[(f64, f64)]) -> usize {
        let rings: Vec<Vec<usize>> = profile
            .iter()
            .map(|&(r, z)| {
                let start = self.vertices.len();
                if r == 0.0 {
                    self.vertices.push(Point3::new(0.0, 0.0, z));
                } else {
                    for k in 0..LATHE_SEGMENTS {
                        let (s, c) = ring_angle(k).sin_cos();
                        self.vertices.push(Point3::new(r * c, r * s, z));
                    }
                }
                (start..self.vertices.len()).collect()
            })
            .collect();
        for w in rings.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            for k in 0..LATHE_SEGMENTS {
                let k1 = (k + 1) % LATHE_SEGMENTS;
                match (a.len(), b.len()) {
                    (1, 1) => {}
                    (1, _) => self.faces.push([a[0], b[k], b[k1]]),
                    (_, 1) => self.faces.push([a[k], a[k1], b[0]]),
                    _ => {
                        self.faces.push([a[k], a[k1], b[k1]]);
                        self.faces.push([a[k], b[k1], b[k]]);
                    }
                }
            }
        }
        let rmax = profile.iter().map(|p| p.0).fold(0.0, f64::max);
        let zmin = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let zmax = profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        self.parts.push(Part {
            name,
            min: Point3::new(-rmax, -rmax, zmin),
            max: Point3::new(rmax, rmax, zmax),
        });
        self.parts.len() - 1
    }

    fn landmark(&mut self, part: usize, position: Point3) {
        self.landmarks.push(Landmark { part, position });
    }
}

fn ring_angle(k: usize) -> f64 {
    2.0 * PI * k as f64 / LATHE_SEGMENTS as f64
}

/// Point at radius `r` on the lathe ring vertex at 45 degrees.
fn diag(r: f64, z: f64) -> Point3 {
    Point3::new(r * FRAC_1_SQRT_2, r * FRAC_1_SQRT_2, z)
}

fn table(rng: &mut ChaCha8Rng) -> Shape {
    let mut s = Shape::new();
    let ax = s.param(rng, "half_length", 0.5, 0.7);
    let ay = s.param(rng, "half_width", 0.35, 0.5);
    let t = s.param(rng, "top_thickness", 0.04, 0.07);
    let h = s.param(rng, "height", 0.6, 0.8);
    let w = s.param(rng, "leg_half_width", 0.025, 0.045);
    let inset = s.param(rng, "leg_inset", 0.04, 0.1);

    let top = s.add_box("top", Point3::new(-ax, -ay, h - t), Point3::new(ax, ay, h));
    let lx = ax - inset - w;
    let ly = ay - inset - w;
    let mut legs = Vec::new();
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let (cx, cy) = (sx * lx, sy * ly);
        legs.push(s.add_box(
            "leg",
            Point3::new(cx - w, cy - w, 0.0),
            Point3::new(cx + w, cy + w, h - t),
        ));
    }
    let leg = legs[0];
    let under = h - t;
    s.landmark(top, Point3::new(ax, ay, h));
    s.landmark(leg, Point3::new(lx, ly, 0.0));
    s.landmark(leg, Point3::new(lx + w, ly, under - 0.02));
    s.landmark(top, Point3::new(0.0, 0.0, h));
    s.landmark(top, Point3::new(ax, 0.0, h - t / 2.0));
    s.landmark(top, Point3::new(0.0, 0.0, under));
    s.landmark(top, Point3::new(0.0, ay, h - t / 2.0));
    s.landmark(leg, Point3::new(lx + w, ly, under / 2.0));
    s.landmark(top, Point3::new(ax / 2.0, 0.0, under));
    s.landmark(top, Point3::new(ax / 2.0, ay / 2.0, h));
    s
}

fn rocket(rng: &mut ChaCha8Rng) -> Shape {
    let mut s = Shape::new();
    let r = s.param(rng, "body_radius", 0.1, 0.15);
    let lb = s.param(rng, "body_length", 1.0, 1.4);
    let hn = s.param(rng, "nose_height", 0.25, 0.4);
    let span = s.param(rng, "fin_span", 0.12, 0.22);
    let hf = s.param(rng, "fin_height", 0.2, 0.35);
    let hz = s.param(rng, "nozzle_height", 0.06, 0.12);
    let rn = 0.7 * r;
    let fin_half = 0.006;
    let root = r - 0.02;

    let body = s.add_lathe(
        "body",
        &[
            (0.0, -hz),
            (rn, -hz),
            (0.5 * r, 0.0),
            (r, 0.0),
            (r, lb),
            (0.0, lb + hn),
        ],
    );
    let mut fins = vec![s.add_box(
        "fin",
        Point3::new(root, -fin_half, 0.0),
        Point3::new(r + span, fin_half, hf),
    )];
    fins.push(s.add_box(
        "fin",
        Point3::new(-fin_half, root, 0.0),
        Point3::new(fin_half, r + span, hf),
    ));
    fins.push(s.add_box(
        "fin",
        Point3::new(-r - span, -fin_half, 0.0),
        Point3::new(-root, fin_half, hf),
    ));
    fins.push(s.add_box(
        "fin",
        Point3::new(-fin_half, -r - span, 0.0),
        Point3::new(fin_half, -root, hf),
    ));
    let fin = fins[0];
    s.landmark(body, Point3::new(0.0, 0.0, lb + hn));
    s.landmark(fin, Point3::new(r + span, 0.0, 0.0));
    s.landmark(fin, Point3::new(r, 0.0, hf));
    s.landmark(body, diag(r, lb));
    s.landmark(body, diag(0.75 * r, 0.0));
    s.landmark(body, Point3::new(0.0, 0.0, -hz));
    s.landmark(body, diag(r, lb / 2.0));
    s.landmark(fin, Point3::new(r + span, 0.0, hf));
    s.landmark(body, diag(0.5 * r, lb + hn / 2.0));
    s.landmark(body, diag(rn, -hz));
    s
}

fn mug(rng: &mut ChaCha8Rng) -> Shape {
    let mut s = Shape::new();
    let big_r = s.param(rng, "radius", 0.3, 0.4);
    let h = s.param(rng, "height", 0.6, 0.9);
    let wall = s.param(rng, "wall", 0.025, 0.04);
    let reach = s.param(rng, "handle_reach", 0.15, 0.22);
    let thick = 0.04;
    let depth = 0.02;
    let zt = 0.8 * h;
    let zb = 0.25 * h;
    let inner = big_r - wall;

    let cup = s.add_lathe(
        "cup",
        &[
            (0.0, 0.0),
            (big_r, 0.0),
            (big_r, h),
            (inner, h),
            (inner, wall),
            (0.0, wall),
        ],
    );
    let upper = s.add_box(
        "handle",
        Point3::new(big_r, -depth, zt - thick),
        Point3::new(big_r + reach, depth, zt),
    );
    let outer = s.add_box(
        "handle",
        Point3::new(big_r + reach - thick, -depth, zb),
        Point3::new(big_r + reach, depth, zt),
    );
    let lower = s.add_box(
        "handle",
        Point3::new(big_r, -depth, zb),
        Point3::new(big_r + reach, depth, zb + thick),
    );
    s.landmark(upper, Point3::new(big_r + reach / 2.0, 0.0, zt));
    s.landmark(cup, Point3::new(big_r - wall / 2.0, 0.0, h));
    s.landmark(cup, Point3::new(0.0, 0.0, 0.0));
    s.landmark(lower, Point3::new(big_r + reach / 2.0, 0.0, zb));
    s.landmark(cup, Point3::new(0.0, big_r - wall / 2.0, h));
    s.landmark(cup, Point3::new(0.0, 0.0, wall));
    s.landmark(outer, Point3::new(big_r + reach, 0.0, (zt + zb) / 2.0));
    s.landmark(cup, Point3::new(-big_r, 0.0, h / 2.0));
    s.landmark(cup, Point3::new(-big_r / 2.0, 0.0, 0.0));
    s.landmark(cup, Point3::new(-(big_r - wall / 2.0), 0.0, h));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub family: String,
    pub n_models: usize,
    pub n_sets: usize,
    pub seed: u64,
    pub symmetry_mode: SymmetryMode,
    pub landmarks: Vec<String>,
    pub models: Vec<ManifestModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestModel {
    pub id: String,
    pub mesh: String,
    pub parameters: BTreeMap<String, f64>,
}

/// A generated category: raw meshes and annotations as written to disk,
/// plus the normalized dataset they parse into.
#[derive(Debug, Clone)]
pub struct SyntheticCategory {
    pub annotations: AnnotationFile,
    pub meshes: Vec<Mesh>,
    pub manifest: Manifest,
    pub dataset: Dataset,
}

impl SyntheticCategory {
    /// Writes `annotations.json`, `manifest.json` and `meshes/*.obj`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (record, mesh) in self.annotations.models.iter().zip(&self.meshes) {
            write_file(&dir.join(&record.mesh), write_obj(mesh).as_bytes())?;
        }
        let mut json = serde_json::to_vec_pretty(&self.annotations)?;
        json.push(b'\n');
        write_file(&dir.join(ANNOTATION_FILE), &json)?;
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        write_file(&dir.join(MANIFEST_FILE), &json)
    }
}

pub fn synthesize_category(
    family: &str,
    n_models: usize,
    n_sets: usize,
    seed: u64,
) -> Result<SyntheticCategory> {
    synthesize_with_symmetry(family.parse()?, n_models, n_sets, seed, SymmetryMode::None)
}

pub fn synthesize_with_symmetry(
    family: Family,
    n_models: usize,
    n_sets: usize,
    seed: u64,
    symmetry_mode: SymmetryMode,
) -> Result<SyntheticCategory> {
    let names = family.landmark_names();
    if n_models < 3 {
        return Err(Error::InvalidArgument(format!(
            "a synthetic category needs at least 3 models, got {n_models}"
        )));
    }
    if n_sets < 2 || n_sets > names.len() {
        return Err(Error::InvalidArgument(format!(
            "family {family} supports 2 to {} sets, got {n_sets}",
            names.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meshes = Vec::with_capacity(n_models);
    let mut models = Vec::with_capacity(n_models);
    let mut manifest_models = Vec::with_capacity(n_models);
    let mut points: Vec<Vec<Vec<PointRecord>>> = vec![Vec::with_capacity(n_models); n_sets];
    for i in 0..n_models {
        let id = format!("{family}_{i:03}");
        let path = format!("meshes/{id}.obj");
        let shape = family.build(&mut rng);
        // round-trip through OBJ text so the in-memory mesh equals the file
        let mesh = parse_obj(
            &write_obj(&Mesh::new(id.as_str(), shape.vertices, shape.faces)?),
            &id,
        )?;
        for (set, lm) in shape.landmarks.iter().take(n_sets).enumerate() {
            let part = &shape.parts[lm.part];
            let mut records = Vec::new();
            for p in family.symmetric_copies(symmetry_mode, lm.position) {
                let (face, dist) = mesh.locate(&p).expect("mesh has faces");
                if dist > SURFACE_TOLERANCE {
                    return Err(Error::Degenerate(format!(
                        "{id}: landmark {} is {dist:e} off the surface",
                        names[set]
                    )));
                }
                records.push(PointRecord {
                    xyz: [p.x, p.y, p.z],
                    face: Some(face),
                    uv: None,
                    rgb: None,
                });
            }
            let inside = (0..3).all(|a| {
                lm.position[a] >= part.min[a] - SURFACE_TOLERANCE
                    && lm.position[a] <= part.max[a] + SURFACE_TOLERANCE
            });
            if !inside {
                return Err(Error::Degenerate(format!(
                    "{id}: landmark {} left its {} part",
                    names[set], part.name
                )));
            }
            points[set].push(records);
        }
        models.push(ModelRecord {
            id: id.clone(),
            mesh: path.clone(),
        });
        manifest_models.push(ManifestModel {
            id,
            mesh: path,
            parameters: shape.params,
        });
        meshes.push(mesh);
    }

    let sets = points
        .into_iter()
        .enumerate()
        .map(|(set, per_model)| SetRecord {
            set_id: set as u32,
            entries: per_model
                .into_iter()
                .zip(&models)
                .map(|(points, m)| EntryRecord {
                    model: m.id.clone(),
                    points,
                })
                .collect(),
        })
        .collect();
    let annotations = AnnotationFile {
        category: family.to_string(),
        symmetry_mode,
        models,
        sets,
    };
    let dataset = build_dataset(&annotations, |record| {
        let i = annotations
            .models
            .iter()
            .position(|m| m.id == record.id)
            .expect("record comes from this file");
        Ok(meshes[i].clone())
    })?;
    Ok(SyntheticCategory {
        manifest: Manifest {
            family: family.to_string(),
            n_models,
            n_sets,
            seed,
            symmetry_mode,
            landmarks: names[..n_sets].iter().map(|s| s.to_string()).collect(),
            models: manifest_models,
        },
        annotations,
        meshes,
        dataset,
    })
}
