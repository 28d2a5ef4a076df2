use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{NeighborIndex, PointCloud};
use crate::scalar::Real;
use crate::seed::derive_seed;

use super::descriptor::{compute_descriptors, DescriptorConfig};
use super::matrix::EmbeddingMatrix;
use super::network::{Network, NetworkInput};

/// Source of per-point embeddings.
#[derive(Clone, Debug, PartialEq)]
pub enum Backend<T> {
    /// Fixed local-geometry histograms.
    Descriptor(DescriptorConfig),
    /// Learnable network.
    Trained(Network<T>),
    /// Precomputed matrix for one specific cloud.
    Imported(EmbeddingMatrix<T>),
    /// Independent Gaussian rows with norm close to 1; a chance-level baseline.
    Random { dim: usize, seed: u64 },
}

impl<T> fmt::Display for Backend<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Descriptor(_) => f.write_str("descriptor"),
            Backend::Trained(_) => f.write_str("trained"),
            Backend::Imported(_) => f.write_str("imported"),
            Backend::Random { seed, .. } => write!(f, "random:{seed}"),
        }
    }
}

impl<T: Real> Backend<T> {
    pub fn descriptor() -> Self {
        Backend::Descriptor(DescriptorConfig::default())
    }

    pub fn dim(&self) -> usize {
        match self {
            Backend::Descriptor(c) => c.dim(),
            Backend::Trained(n) => n.output_dim(),
            Backend::Imported(m) => m.dim(),
            Backend::Random { dim, .. } => *dim,
        }
    }

    /// Neighbor count the backend needs precomputed in the index.
    pub fn required_k(&self) -> usize {
        match self {
            Backend::Trained(n) => n.config().k_agg,
            _ => 0,
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, Backend::Trained(_))
    }

    /// Embeds a (normalized) cloud using an index built over it.
    pub fn embed_with_index(&self, cloud: &PointCloud<T>, index: &NeighborIndex<T>) -> Result<EmbeddingMatrix<T>> {
        let n = cloud.len();
        match self {
            Backend::Descriptor(cfg) => Ok(compute_descriptors(cloud, index, cfg)),
            Backend::Trained(net) => Ok(net.embed(&NetworkInput::prepare(cloud, index, net.config()))),
            Backend::Imported(m) => {
                if m.rows() != n {
                    return Err(Error::RowMismatch { rows: m.rows(), points: n });
                }
                Ok(m.clone())
            }
            Backend::Random { dim, seed } => Ok(random_embedding(n, *dim, *seed)),
        }
    }

    pub fn embed(&self, cloud: &PointCloud<T>) -> Result<EmbeddingMatrix<T>> {
        let index = NeighborIndex::build(cloud, self.required_k());
        self.embed_with_index(cloud, &index)
    }
}

/// Dimension of the random baseline when the spec gives none.
pub const RANDOM_DIM: usize = 64;

/// Parses `descriptor`, `random[:seed]`, `import:<file>`, `ckpt:<file>` or a bare checkpoint path.
pub fn parse_backend<T: Real>(spec: &str) -> Result<Backend<T>> {
    if spec == "descriptor" {
        return Ok(Backend::descriptor());
    }
    if spec == "random" {
        return Ok(Backend::Random { dim: RANDOM_DIM, seed: 0 });
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed = seed.parse().map_err(|_| Error::InvalidArgument(format!("bad random seed in {spec:?}")))?;
        return Ok(Backend::Random { dim: RANDOM_DIM, seed });
    }
    if let Some(file) = spec.strip_prefix("import:") {
        return Ok(Backend::Imported(EmbeddingMatrix::load(Path::new(file))?));
    }
    let file = spec.strip_prefix("ckpt:").unwrap_or(spec);
    if file.is_empty() {
        return Err(Error::InvalidArgument("empty backend spec".into()));
    }
    Ok(Backend::Trained(Network::load(Path::new(file))?))
}

pub fn random_embedding<T: Real>(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix<T> {
    let mut m = EmbeddingMatrix::zeros(rows, dim);
    let scale = 1.0 / (dim.max(1) as f64).sqrt();
    for i in 0..rows {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        for v in m.row_mut(i) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = T::lit(g * scale);
        }
    }
    m
}
