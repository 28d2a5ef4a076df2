//! Multi-radius point-pair angular histograms (FPFH-style local descriptors).

use serde::{Deserialize, Serialize};

use crate::geometry::{NeighborIndex, PointCloud};
use crate::scalar::Real;

use super::matrix::EmbeddingMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    /// Neighborhood radii in normalized-cloud units.
    pub radii: Vec<f64>,
    /// Histogram bins per angular feature.
    pub bins: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self { radii: vec![0.05, 0.1, 0.2], bins: 8 }
    }
}

impl DescriptorConfig {
    pub fn dim(&self) -> usize {
        self.radii.len() * 3 * self.bins
    }
}

fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Linear soft binning of `v` in `[lo, hi]` over `hist`.
fn soft_bin<T: Real>(hist: &mut [T], v: T, lo: T, hi: T) {
    let bins = hist.len();
    let t = ((v - lo) / (hi - lo) * T::from_usize_lossy(bins) - T::lit(0.5))
        .max(T::zero())
        .min(T::from_usize_lossy(bins - 1));
    let b0 = t.floor().to_usize().unwrap_or(0).min(bins - 1);
    let frac = t - T::from_usize_lossy(b0);
    hist[b0] += T::one() - frac;
    if b0 + 1 < bins {
        hist[b0 + 1] += frac;
    }
}

/// Darboux-frame angles `(alpha, phi, theta)` of the pair `(p, q)`.
fn pair_features<T: Real>(p: &[T; 3], np: &[T; 3], q: &[T; 3], nq: &[T; 3]) -> Option<(T, T, T)> {
    let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let dn = dot(&d, &d).sqrt();
    if !(dn > T::zero()) {
        return None;
    }
    let dir = [d[0] / dn, d[1] / dn, d[2] / dn];
    let v = cross(np, &dir);
    let vn = dot(&v, &v).sqrt();
    if !(vn > T::epsilon()) {
        return None;
    }
    let v = [v[0] / vn, v[1] / vn, v[2] / vn];
    let w = cross(np, &v);
    let alpha = dot(&v, nq);
    let phi = dot(np, &dir);
    let theta = dot(&w, nq).atan2(dot(np, nq));
    Some((alpha, phi, theta))
}

fn spfh<T: Real>(cloud: &PointCloud<T>, i: usize, nbrs: &[usize], bins: usize) -> Vec<T> {
    let mut h = vec![T::zero(); 3 * bins];
    let (p, np) = (cloud.position(i), cloud.normal(i));
    let mut count = 0usize;
    let pi = T::lit(std::f64::consts::PI);
    for &j in nbrs {
        if let Some((a, f, t)) = pair_features(p, np, cloud.position(j), cloud.normal(j)) {
            soft_bin(&mut h[0..bins], a, -T::one(), T::one());
            soft_bin(&mut h[bins..2 * bins], f, -T::one(), T::one());
            soft_bin(&mut h[2 * bins..], t, -pi, pi);
            count += 1;
        }
    }
    if count > 0 {
        let c = T::from_usize_lossy(count);
        for v in &mut h {
            *v /= c;
        }
    }
    h
}

/// Per-point descriptors: for each radius, the point's own pair histogram
/// averaged with the mean histogram of its neighbors; radii concatenated and
/// the whole row scaled to unit length (all-zero rows stay zero).
pub fn compute_descriptors<T: Real>(
    cloud: &PointCloud<T>,
    index: &NeighborIndex<T>,
    cfg: &DescriptorConfig,
) -> EmbeddingMatrix<T> {
    let n = cloud.len();
    let b = cfg.bins;
    let block = 3 * b;
    let mut out = EmbeddingMatrix::zeros(n, cfg.dim());
    let half = T::lit(0.5);
    for (ri, &r) in cfg.radii.iter().enumerate() {
        let nbrs: Vec<Vec<usize>> = (0..n).map(|i| index.within_radius(i, T::lit(r))).collect();
        let own: Vec<Vec<T>> = (0..n).map(|i| spfh(cloud, i, &nbrs[i], b)).collect();
        for i in 0..n {
            let row = &mut out.row_mut(i)[ri * block..(ri + 1) * block];
            let m = T::from_usize_lossy(nbrs[i].len().max(1));
            for (slot, v) in row.iter_mut().zip(&own[i]) {
                *slot = *v;
            }
            if !nbrs[i].is_empty() {
                for a in 0..block {
                    let s: T = nbrs[i].iter().map(|&j| own[j][a]).sum();
                    row[a] = half * (row[a] + s / m);
                }
            }
        }
    }
    for i in 0..n {
        let row = out.row_mut(i);
        let len = row.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if len > T::zero() {
            for v in row {
                *v /= len;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{reshuffle_compose, ComposeConfig, LabeledShape};

    fn rotate(p: [f64; 3]) -> [f64; 3] {
        // rotation by 0.7 rad about z followed by 0.4 rad about x
        let (s, c) = 0.7f64.sin_cos();
        let a = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        let (s, c) = 0.4f64.sin_cos();
        [a[0], c * a[1] - s * a[2], s * a[1] + c * a[2]]
    }

    #[test]
    fn rigid_motion_invariance() {
        let cfg = ComposeConfig { k_min: 2, k_max: 3, n_points: 512, ..ComposeConfig::default() };
        let shape: LabeledShape<f64> = reshuffle_compose(&cfg, 3).unwrap();
        let c = shape.cloud();
        let moved = PointCloud::new(
            c.positions().iter().map(|p| {
                let r = rotate(*p);
                [r[0] + 0.3, r[1] - 0.1, r[2] + 0.2]
            }).collect(),
            c.normals().iter().map(|n| rotate(*n)).collect(),
        )
        .unwrap();
        let dc = DescriptorConfig::default();
        let a = compute_descriptors(c, &NeighborIndex::build(c, 0), &dc);
        let b = compute_descriptors(&moved, &NeighborIndex::build(&moved, 0), &dc);
        for i in 0..c.len() {
            for (x, y) in a.row(i).iter().zip(b.row(i)) {
                assert!((x - y).abs() < 1e-3, "point {i}");
            }
        }
    }

    #[test]
    fn rows_are_unit_or_zero() {
        let cfg = ComposeConfig { k_min: 2, k_max: 3, n_points: 256, ..ComposeConfig::default() };
        let shape: LabeledShape<f64> = reshuffle_compose(&cfg, 1).unwrap();
        let c = shape.cloud();
        let d = compute_descriptors(c, &NeighborIndex::build(c, 0), &DescriptorConfig::default());
        assert_eq!(d.dim(), 72);
        for i in 0..c.len() {
            let len = crate::scalar::norm(d.row(i));
            assert!(len == 0.0 || (len - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_bins_conserve_mass() {
        let mut h = [0.0f64; 8];
        for v in [-1.0, -0.3, 0.0, 0.51, 1.0] {
            soft_bin(&mut h, v, -1.0, 1.0);
        }
        assert!((h.iter().sum::<f64>() - 5.0).abs() < 1e-12);
    }
}
