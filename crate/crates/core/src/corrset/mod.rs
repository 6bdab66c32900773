//! Correspondence-set annotations, splits, synthetic categories and
//! partial crops.

mod attach;
mod distance;
mod format;
mod partial;
mod split;
mod synth;
mod types;

pub use attach::{attach_to_cloud, ATTACH_LIMIT};
pub use distance::{set_distance, set_distance_over, SetDistances};
pub use format::{
    annotation_file, build_dataset, parse_annotations, parse_dataset, write_dataset, AnnotationFile,
    EntryRecord, ModelRecord, PointRecord, SetRecord, ANNOTATION_FILE,
};
pub use partial::{crop_partial, crop_partial_around, PartialCloud};
pub use split::{split_models, Split, SplitPart};
pub use synth::{
    synthesize_category, synthesize_with_symmetry, Family, Manifest, ManifestModel, SyntheticCategory,
    LATHE_SEGMENTS, MANIFEST_FILE,
};
pub use types::{
    resolve_hyperpoint, CorrespondenceSet, Dataset, Hyperpoint, ModelEntry, SemanticPoint, SetEntry,
    SymmetryMode, UNIT_BALL_TOLERANCE,
};
