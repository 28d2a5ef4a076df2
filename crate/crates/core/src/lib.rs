//! Interactive part segmentation of 3D point clouds from a handful of clicks.
//!
//! Points are embedded so that points of one primitive cluster together; a
//! positive click then selects an embedding-space ball around the clicked
//! point, negative clicks shrink those balls, and the mask is cleaned on the
//! euclidean neighbor graph.
//!
//! ```
//! use clickseg::{ClickKind, EmbeddingMatrix, PointCloud, PostprocessConfig, Session};
//!
//! let pts: Vec<[f64; 3]> = (0..40).map(|i| [i as f64 * 0.05, 0.0, 0.0]).collect();
//! let cloud = PointCloud::new(pts, vec![[0.0, 0.0, 1.0]; 40]).unwrap();
//! let labels: Vec<usize> = (0..40).map(|i| i / 20).collect();
//! let z = EmbeddingMatrix::one_hot(&labels, 2);
//! let mut session = Session::from_cloud(cloud, z, 0.35, PostprocessConfig::default()).unwrap();
//! session.add_click(ClickKind::Positive, 3).unwrap();
//! assert_eq!(session.mask().indices(), (0..20).collect::<Vec<_>>());
//! ```

pub mod config;
pub mod embedding;
pub mod error;
pub mod forge;
pub mod geometry;
pub mod interact;
pub mod postprocess;
pub mod scalar;
pub mod seed;
pub mod simulate;
pub mod tune;

pub use config::HyperParams;
pub use embedding::{parse_backend, Backend, EmbeddingMatrix, LossWeights, Network, NetworkConfig, NetworkInput, TrainOptions};
pub use error::{Error, Result};
pub use forge::{ComposeConfig, LabeledShape};
pub use geometry::{iou, NeighborIndex, PointCloud, SegmentMask};
pub use interact::{annotate, open_session, replay, Click, ClickKind, ClickSet, MaskDelta, Session};
pub use postprocess::PostprocessConfig;
pub use scalar::Real;
pub use seed::derive_seed;
pub use simulate::{BenchConfig, BenchmarkReport, SimConfig, Trajectory};
pub use tune::{finetune, TuneConfig};

pub type Cloud = PointCloud<f64>;
pub type Cloud32 = PointCloud<f32>;
pub type Embeddings = EmbeddingMatrix<f64>;
pub type Embeddings32 = EmbeddingMatrix<f32>;
pub type Shape = LabeledShape<f64>;
pub type Shape32 = LabeledShape<f32>;
pub type Net = Network<f64>;
pub type Net32 = Network<f32>;
pub type Annotation = Session<f64>;
pub type Annotation32 = Session<f32>;
pub type EmbeddingBackend = Backend<f64>;
pub type EmbeddingBackend32 = Backend<f32>;
