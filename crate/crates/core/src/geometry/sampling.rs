use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::cloud::PointCloud;

/// Farthest-point sampling over raw positions.
///
/// The first index is a seeded uniform draw; every later pick maximizes the
/// distance to the chosen set (ties to the lowest index). Returns all indices
/// in order when `n >= points.len()`.
pub fn fps_indices<T: Real>(points: &[[T; 3]], n: usize, seed: u64) -> Vec<usize> {
    let total = points.len();
    if total == 0 || n == 0 {
        return Vec::new();
    }
    if n >= total {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..total);
    fps_from(points, n, first)
}

/// Farthest-point sampling starting from a given index.
pub fn fps_from<T: Real>(points: &[[T; 3]], n: usize, first: usize) -> Vec<usize> {
    let total = points.len();
    let n = n.min(total);
    let mut chosen = Vec::with_capacity(n);
    if n == 0 {
        return chosen;
    }
    let mut min_d = vec![T::infinity(); total];
    let mut current = first;
    for _ in 0..n {
        chosen.push(current);
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d = T::neg_infinity();
        for (j, p) in points.iter().enumerate() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let dz = p[2] - c[2];
            let d = dx * dx + dy * dy + dz * dz;
            if d < min_d[j] {
                min_d[j] = d;
            }
            if min_d[j] > best_d {
                best_d = min_d[j];
                best = j;
            }
        }
        current = best;
    }
    chosen
}

/// Downsamples a cloud with farthest-point sampling, returning the sample and
/// the index of each sampled point in the input.
pub fn fps_sample<T: Real>(cloud: &PointCloud<T>, n: usize, seed: u64) -> Result<(PointCloud<T>, Vec<usize>)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let idx = fps_indices(cloud.positions(), n, seed);
    Ok((cloud.select(&idx), idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_pairwise(points: &[[f64; 3]], idx: &[usize]) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                m = m.min(crate::scalar::dist(&points[idx[a]], &points[idx[b]]));
            }
        }
        m
    }

    #[test]
    fn saturation_is_identity() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let c = PointCloud::new(pts, vec![[0.0, 0.0, 1.0]; 10]).unwrap();
        let (s, idx) = fps_sample(&c, 10, 4).unwrap();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert_eq!(s, c);
    }

    #[test]
    fn endpoints_from_endpoint_start() {
        let pts = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(fps_from(&pts, 2, 0), vec![0, 2]);
        assert_eq!(fps_from(&pts, 2, 2), vec![2, 0]);
        for seed in 0..32 {
            let idx = fps_indices(&pts, 2, seed);
            if idx[0] != 1 {
                let mut s = idx.clone();
                s.sort();
                assert_eq!(s, vec![0, 2]);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..200).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        assert_eq!(fps_indices(&pts, 20, 77), fps_indices(&pts, 20, 77));
    }

    #[test]
    fn spread_beats_random_subsets() {
        use rand::seq::index::sample;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<[f64; 3]> = (0..256).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let idx = fps_indices(&pts, 16, 5);
        let fps_spread = min_pairwise(&pts, &idx);
        for _ in 0..1000 {
            let sub = sample(&mut rng, 256, 16).into_vec();
            assert!(fps_spread >= min_pairwise(&pts, &sub));
        }
    }
}
