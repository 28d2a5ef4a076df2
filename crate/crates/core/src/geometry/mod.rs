//! Point-cloud container, neighbor search, sampling, masks and file formats.

pub mod cloud;
pub mod io;
pub mod knn;
pub mod mask;
pub mod sampling;

pub use cloud::{normalize_cloud, normalize_with_transform, PointCloud};
pub use knn::NeighborIndex;
pub use mask::{iou, SegmentMask};
pub use sampling::{fps_indices, fps_sample};
