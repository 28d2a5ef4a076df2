//! Learnable pointwise network with two rounds of neighborhood mean aggregation.
//!
//! ```text
//! h1 = relu(W1 x + b1)
//! a1 = mean of h1 over the k nearest neighbors
//! h2 = relu(W2 [h1, a1] + b2)
//! a2 = mean of h2 over the k nearest neighbors
//! z  = W3 [h2, a2] + b3
//! ```
//! `x` is position, normal and local descriptor concatenated.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::io::write_atomic;
use crate::geometry::{NeighborIndex, PointCloud};
use crate::scalar::Real;

use super::descriptor::{compute_descriptors, DescriptorConfig};
use super::matrix::EmbeddingMatrix;

const MAGIC: &[u8; 8] = b"CLKSEGNN";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub output: usize,
    /// Neighbors per aggregation round.
    pub k_agg: usize,
    pub descriptor: DescriptorConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: 64, output: 64, k_agg: 16, descriptor: DescriptorConfig::default() }
    }
}

impl NetworkConfig {
    pub fn input(&self) -> usize {
        6 + self.descriptor.dim()
    }

    fn layout(&self) -> Layout {
        let (i, h, o) = (self.input(), self.hidden, self.output);
        let w1 = 0;
        let b1 = w1 + i * h;
        let w2 = b1 + h;
        let b2 = w2 + 2 * h * h;
        let w3 = b2 + h;
        let b3 = w3 + 2 * h * o;
        Layout { w1, b1, w2, b2, w3, b3, len: b3 + o }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// Offsets of each weight block. Weights are stored input-major (`in x out`).
#[derive(Clone, Copy, Debug)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

/// Per-cloud network input: features plus the aggregation neighborhoods.
#[derive(Clone, Debug)]
pub struct NetworkInput<T> {
    pub features: EmbeddingMatrix<T>,
    k: usize,
    neighbors: Vec<usize>,
}

impl<T: Real> NetworkInput<T> {
    pub fn prepare(cloud: &PointCloud<T>, index: &NeighborIndex<T>, cfg: &NetworkConfig) -> Self {
        let desc = compute_descriptors(cloud, index, &cfg.descriptor);
        let n = cloud.len();
        let mut features = EmbeddingMatrix::zeros(n, cfg.input());
        for i in 0..n {
            let row = features.row_mut(i);
            row[..3].copy_from_slice(cloud.position(i));
            row[3..6].copy_from_slice(cloud.normal(i));
            row[6..].copy_from_slice(desc.row(i));
        }
        let k = cfg.k_agg.min(n.saturating_sub(1));
        let mut neighbors = Vec::with_capacity(n * k);
        for i in 0..n {
            if k <= index.width() {
                neighbors.extend_from_slice(index.neighbors(i, k));
            } else {
                neighbors.extend(index.knn_query(i, k).expect("index in range"));
            }
        }
        Self { features, k, neighbors }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    #[inline]
    fn nbrs(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Rows whose hidden states feed the outputs of `targets`: (layer-1 rows, layer-2 rows).
    fn receptive_field(&self, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let mut l2 = vec![false; n];
        for &t in targets {
            l2[t] = true;
            for &j in self.nbrs(t) {
                l2[j] = true;
            }
        }
        let mut l1 = l2.clone();
        for i in 0..n {
            if l2[i] {
                for &j in self.nbrs(i) {
                    l1[j] = true;
                }
            }
        }
        let rows = |m: Vec<bool>| m.into_iter().enumerate().filter(|(_, f)| *f).map(|(i, _)| i).collect();
        (rows(l1), rows(l2))
    }
}

/// Rows evaluated at each stage of a forward pass.
struct Plan {
    l1: Vec<usize>,
    l2: Vec<usize>,
    out: Vec<usize>,
}

/// Hidden activations kept for the backward pass.
pub struct ForwardCache<T> {
    h1: Vec<T>,
    a1: Vec<T>,
    h2: Vec<T>,
    a2: Vec<T>,
    plan: Plan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<T>,
}

#[inline]
fn affine<T: Real>(x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    out.copy_from_slice(b);
    let o = out.len();
    for (c, xv) in x.iter().enumerate() {
        if *xv == T::zero() {
            continue;
        }
        let wr = &w[c * o..(c + 1) * o];
        for (ov, wv) in out.iter_mut().zip(wr) {
            *ov += *xv * *wv;
        }
    }
}

/// Accumulates `dW += x dy^T`, `db += dy` and, when requested, `dx = W dy`.
#[inline]
fn affine_back<T: Real>(x: &[T], w: &[T], dy: &[T], dw: &mut [T], db: &mut [T], dx: Option<&mut [T]>) {
    let o = dy.len();
    for (bv, d) in db.iter_mut().zip(dy) {
        *bv += *d;
    }
    for (c, xv) in x.iter().enumerate() {
        if *xv != T::zero() {
            for (g, d) in dw[c * o..(c + 1) * o].iter_mut().zip(dy) {
                *g += *xv * *d;
            }
        }
    }
    if let Some(dx) = dx {
        for (c, slot) in dx.iter_mut().enumerate() {
            let wr = &w[c * o..(c + 1) * o];
            *slot = wr.iter().zip(dy).map(|(a, b)| *a * *b).sum();
        }
    }
}

impl<T: Real> Network<T> {
    pub fn zeros(config: NetworkConfig) -> Self {
        let n = config.param_count();
        Self { config, params: vec![T::zero(); n] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: NetworkConfig, seed: u64) -> Self {
        let mut net = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = net.config.layout();
        let (i, h, o) = (net.config.input(), net.config.hidden, net.config.output);
        for (start, fan_in, fan_out) in [(l.w1, i, h), (l.w2, 2 * h, h), (l.w3, 2 * h, o)] {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[start..start + fan_in * fan_out] {
                *p = T::lit(rng.random_range(-s..s));
            }
        }
        net
    }

    pub fn from_params(config: NetworkConfig, params: Vec<T>) -> Result<Self> {
        if params.len() != config.param_count() {
            return Err(Error::LengthMismatch { left: params.len(), right: config.param_count() });
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn output_dim(&self) -> usize {
        self.config.output
    }

    fn run(&self, input: &NetworkInput<T>, plan: Plan) -> (EmbeddingMatrix<T>, ForwardCache<T>) {
        let n = input.len();
        let h = self.config.hidden;
        let o = self.config.output;
        let l = self.config.layout();
        let p = &self.params;
        let kf = T::from_usize_lossy(input.k.max(1));

        let mut h1 = vec![T::zero(); n * h];
        for &i in &plan.l1 {
            affine(input.features.row(i), &p[l.w1..l.b1], &p[l.b1..l.w2], &mut h1[i * h..(i + 1) * h]);
            for v in &mut h1[i * h..(i + 1) * h] {
                *v = v.max(T::zero());
            }
        }
        let mut a1 = vec![T::zero(); n * h];
        let mut h2 = vec![T::zero(); n * h];
        let mut u = vec![T::zero(); 2 * h];
        for &i in &plan.l2 {
            let acc = &mut a1[i * h..(i + 1) * h];
            for &j in input.nbrs(i) {
                for (a, v) in acc.iter_mut().zip(&h1[j * h..(j + 1) * h]) {
                    *a += *v;
                }
            }
            for a in acc.iter_mut() {
                *a /= kf;
            }
            u[..h].copy_from_slice(&h1[i * h..(i + 1) * h]);
            u[h..].copy_from_slice(&a1[i * h..(i + 1) * h]);
            let out = &mut h2[i * h..(i + 1) * h];
            affine(&u, &p[l.w2..l.b2], &p[l.b2..l.w3], out);
            for v in out.iter_mut() {
                *v = v.max(T::zero());
            }
        }
        let mut a2 = vec![T::zero(); n * h];
        let mut z = EmbeddingMatrix::zeros(n, o);
        for &i in &plan.out {
            let acc = &mut a2[i * h..(i + 1) * h];
            for &j in input.nbrs(i) {
                for (a, v) in acc.iter_mut().zip(&h2[j * h..(j + 1) * h]) {
                    *a += *v;
                }
            }
            for a in acc.iter_mut() {
                *a /= kf;
            }
            u[..h].copy_from_slice(&h2[i * h..(i + 1) * h]);
            u[h..].copy_from_slice(&a2[i * h..(i + 1) * h]);
            affine(&u, &p[l.w3..l.b3], &p[l.b3..l.len], z.row_mut(i));
        }
        (z, ForwardCache { h1, a1, h2, a2, plan })
    }

    /// Embeds every point.
    pub fn forward(&self, input: &NetworkInput<T>) -> (EmbeddingMatrix<T>, ForwardCache<T>) {
        let all: Vec<usize> = (0..input.len()).collect();
        self.run(input, Plan { l1: all.clone(), l2: all.clone(), out: all })
    }

    pub fn embed(&self, input: &NetworkInput<T>) -> EmbeddingMatrix<T> {
        self.forward(input).0
    }

    /// Evaluates only the rows of `targets` (other output rows are zero),
    /// touching just their two-hop neighborhood.
    pub fn forward_rows(&self, input: &NetworkInput<T>, targets: &[usize]) -> (EmbeddingMatrix<T>, ForwardCache<T>) {
        let (l1, l2) = input.receptive_field(targets);
        let mut out = targets.to_vec();
        out.sort_unstable();
        out.dedup();
        self.run(input, Plan { l1, l2, out })
    }

    /// Gradient of a scalar with respect to the parameters, given its gradient
    /// `dz` with respect to the output rows evaluated in `cache`.
    pub fn backward(&self, input: &NetworkInput<T>, cache: &ForwardCache<T>, dz: &EmbeddingMatrix<T>) -> Vec<T> {
        let n = input.len();
        let h = self.config.hidden;
        let l = self.config.layout();
        let p = &self.params;
        let kf = T::from_usize_lossy(input.k.max(1));
        let mut g = vec![T::zero(); l.len];

        let mut dh2 = vec![T::zero(); n * h];
        let mut da2 = vec![T::zero(); n * h];
        let mut u = vec![T::zero(); 2 * h];
        let mut du = vec![T::zero(); 2 * h];
        {
            let (gw, rest) = g[l.w3..].split_at_mut(l.b3 - l.w3);
            for &i in &cache.plan.out {
                let dzi = dz.row(i);
                if dzi.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                u[..h].copy_from_slice(&cache.h2[i * h..(i + 1) * h]);
                u[h..].copy_from_slice(&cache.a2[i * h..(i + 1) * h]);
                affine_back(&u, &p[l.w3..l.b3], dzi, gw, rest, Some(&mut du));
                for (a, b) in dh2[i * h..(i + 1) * h].iter_mut().zip(&du[..h]) {
                    *a += *b;
                }
                da2[i * h..(i + 1) * h].copy_from_slice(&du[h..]);
            }
        }
        for &i in &cache.plan.out {
            for &j in input.nbrs(i) {
                for a in 0..h {
                    dh2[j * h + a] += da2[i * h + a] / kf;
                }
            }
        }

        let mut dh1 = vec![T::zero(); n * h];
        let mut da1 = vec![T::zero(); n * h];
        let mut dpre = vec![T::zero(); h];
        {
            let (gw, rest) = g[l.w2..l.w3].split_at_mut(l.b2 - l.w2);
            for &i in &cache.plan.l2 {
                let mut any = false;
                for a in 0..h {
                    let active = cache.h2[i * h + a] > T::zero();
                    dpre[a] = if active { dh2[i * h + a] } else { T::zero() };
                    any |= dpre[a] != T::zero();
                }
                if !any {
                    continue;
                }
                u[..h].copy_from_slice(&cache.h1[i * h..(i + 1) * h]);
                u[h..].copy_from_slice(&cache.a1[i * h..(i + 1) * h]);
                affine_back(&u, &p[l.w2..l.b2], &dpre, gw, rest, Some(&mut du));
                for (a, b) in dh1[i * h..(i + 1) * h].iter_mut().zip(&du[..h]) {
                    *a += *b;
                }
                da1[i * h..(i + 1) * h].copy_from_slice(&du[h..]);
            }
        }
        for &i in &cache.plan.l2 {
            for &j in input.nbrs(i) {
                for a in 0..h {
                    dh1[j * h + a] += da1[i * h + a] / kf;
                }
            }
        }

        let (gw, rest) = g[l.w1..l.w2].split_at_mut(l.b1 - l.w1);
        for &i in &cache.plan.l1 {
            let mut any = false;
            for a in 0..h {
                let active = cache.h1[i * h + a] > T::zero();
                dpre[a] = if active { dh1[i * h + a] } else { T::zero() };
                any |= dpre[a] != T::zero();
            }
            if any {
                affine_back(input.features.row(i), &p[l.w1..l.b1], &dpre, gw, rest, None);
            }
        }
        g
    }

    /// Binary checkpoint: magic, version, shape header, descriptor radii, then `f64` parameters (LE).
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, c.input() as u32, c.hidden as u32, c.output as u32, c.k_agg as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(c.descriptor.bins as u32).to_le_bytes());
        out.extend_from_slice(&(c.descriptor.radii.len() as u32).to_le_bytes());
        for r in &c.descriptor.radii {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let input = cur.u32()? as usize;
        let hidden = cur.u32()? as usize;
        let output = cur.u32()? as usize;
        let k_agg = cur.u32()? as usize;
        let bins = cur.u32()? as usize;
        let nr = cur.u32()? as usize;
        let radii = (0..nr).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let config = NetworkConfig { hidden, output, k_agg, descriptor: DescriptorConfig { radii, bins } };
        if config.input() != input {
            return Err(Error::Checkpoint("input width inconsistent with descriptor".into()));
        }
        let count = cur.u64()? as usize;
        if count != config.param_count() {
            return Err(Error::Checkpoint(format!("expected {} parameters, header says {count}", config.param_count())));
        }
        let params = (0..count).map(|_| cur.f64().map(T::lit)).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Self::from_params(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
