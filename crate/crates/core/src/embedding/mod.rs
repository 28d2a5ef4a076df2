//! Per-point embeddings: losses, backends and training.

pub mod backend;
pub mod descriptor;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod train;

pub use backend::{parse_backend, random_embedding, Backend, RANDOM_DIM};
pub use descriptor::{compute_descriptors, DescriptorConfig};
pub use loss::{centric_inter_loss, centric_intra_loss, reg_loss, segment_centers, total_loss, LossValue, LossWeights};
pub use matrix::EmbeddingMatrix;
pub use network::{Network, NetworkConfig, NetworkInput};
pub use train::{cosine_lr, train, PreparedShape, TrainOptions, TrainReport};
