//! Procedural primitives and reshuffled training shapes.

pub mod compose;
pub mod dataset;
pub mod parts;
pub mod primitive;
pub mod shape;

pub use compose::{compose_detailed, reshuffle_compose, ComposeConfig, ComposedShape, KindName, PrimitiveRanges};
pub use dataset::{generate_dataset, list_dataset, read_manifest, DatasetItem, Manifest, ManifestEntry};
pub use parts::{random_part, segment_adjacency, SyntheticPart};
pub use primitive::{sample_primitive, Patch, Pose, PrimitiveKind, PrimitiveSpec};
pub use shape::LabeledShape;
