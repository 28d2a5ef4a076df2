//! Mask refinement on the euclidean kNN graph: outlier removal and smoothing.

use std::borrow::Cow;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{NeighborIndex, SegmentMask};
use crate::interact::ClickSet;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub outlier_removal: bool,
    pub smoothing: bool,
    /// Graph degree for outlier removal.
    pub n_neighbor: usize,
    pub n_smooth: usize,
    pub gamma: f64,
    pub n_iter: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { outlier_removal: true, smoothing: true, n_neighbor: 3, n_smooth: 32, gamma: 0.7, n_iter: 5 }
    }
}

impl PostprocessConfig {
    pub fn disabled() -> Self {
        Self { outlier_removal: false, smoothing: false, ..Self::default() }
    }

    /// Neighbor count an index must precompute to serve both passes.
    pub fn required_k(&self) -> usize {
        self.n_neighbor.max(self.n_smooth)
    }
}

fn knn<T: Real>(index: &NeighborIndex<T>, i: usize, k: usize) -> Cow<'_, [usize]> {
    if k <= index.width() {
        Cow::Borrowed(index.neighbors(i, k))
    } else {
        Cow::Owned(index.knn_query(i, k).expect("index in range"))
    }
}

/// Keeps the masked points that share a connected component with a positive
/// click, where masked `i` and `j` are joined when either is among the other's
/// `n_neighbor` nearest neighbors. Unweighted, so reachability is the same
/// question a shortest-path search would answer.
pub fn outlier_removal<T: Real>(
    index: &NeighborIndex<T>,
    mask: &SegmentMask,
    positives: &[usize],
    n_neighbor: usize,
) -> SegmentMask {
    if positives.is_empty() {
        log::warn!("outlier removal without positive clicks; mask left unchanged");
        return mask.clone();
    }
    let n = mask.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if !mask.get(i) {
            continue;
        }
        for &j in knn(index, i, n_neighbor).iter() {
            if mask.get(j) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut keep = SegmentMask::empty(n);
    let mut queue = VecDeque::new();
    for &p in positives {
        if p < n && mask.get(p) && !keep.get(p) {
            keep.set(p, true);
            queue.push_back(p);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !keep.get(j) {
                keep.set(j, true);
                queue.push_back(j);
            }
        }
    }
    keep
}

/// Repeatedly flags unflagged points whose `n_smooth` nearest neighbors are
/// more than a `gamma` fraction flagged. Each round reads the mask as it stood
/// at the start of the round; stops early at a fixed point.
pub fn segment_smoothing<T: Real>(
    index: &NeighborIndex<T>,
    mask: &SegmentMask,
    n_smooth: usize,
    gamma: f64,
    n_iter: usize,
) -> SegmentMask {
    let mut current = mask.clone();
    let n = mask.len();
    if n < 2 || n_smooth == 0 {
        return current;
    }
    for _ in 0..n_iter {
        let mut added = Vec::new();
        for i in 0..n {
            if current.get(i) {
                continue;
            }
            let nb = knn(index, i, n_smooth);
            let hits = nb.iter().filter(|&&j| current.get(j)).count();
            if hits as f64 / nb.len() as f64 > gamma {
                added.push(i);
            }
        }
        if added.is_empty() {
            break;
        }
        for i in added {
            current.set(i, true);
        }
    }
    current
}

/// Full refinement: outlier removal, smoothing, then the negative clicks are
/// cleared again so smoothing cannot re-add them.
pub fn refine<T: Real>(index: &NeighborIndex<T>, raw: &SegmentMask, clicks: &ClickSet, cfg: &PostprocessConfig) -> SegmentMask {
    let mut mask = raw.clone();
    if cfg.outlier_removal && !clicks.positives().is_empty() {
        mask = outlier_removal(index, &mask, clicks.positives(), cfg.n_neighbor);
    }
    if cfg.smoothing {
        mask = segment_smoothing(index, &mask, cfg.n_smooth, cfg.gamma, cfg.n_iter);
    }
    for &n in clicks.negatives() {
        mask.set(n, false);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, gap_after: usize) -> NeighborIndex<f64> {
        let pts = (0..n)
            .map(|i| {
                let x = i as f64 + if i > gap_after { 100.0 } else { 0.0 };
                [x, 0.0, 0.0]
            })
            .collect();
        NeighborIndex::from_points(pts, 4)
    }

    #[test]
    fn connected_mask_unchanged() {
        let idx = line(10, 100);
        let m = SegmentMask::from_indices(10, &[2, 3, 4, 5]).unwrap();
        assert_eq!(outlier_removal(&idx, &m, &[3], 3), m);
    }

    #[test]
    fn separated_cluster_removed() {
        let idx = line(12, 5);
        let m = SegmentMask::from_indices(12, &[0, 1, 2, 7, 8, 9]).unwrap();
        let out = outlier_removal(&idx, &m, &[1], 3);
        assert_eq!(out.indices(), vec![0, 1, 2]);
    }

    #[test]
    fn no_positives_returns_input() {
        let idx = line(6, 100);
        let m = SegmentMask::from_indices(6, &[0, 4]).unwrap();
        assert_eq!(outlier_removal(&idx, &m, &[], 3), m);
    }

    #[test]
    fn isolated_point_removed() {
        // point 9 is masked but none of its 3 nearest neighbors are, nor is it theirs
        let idx = line(10, 100);
        let m = SegmentMask::from_indices(10, &[0, 1, 2, 9]).unwrap();
        assert_eq!(outlier_removal(&idx, &m, &[0], 3).indices(), vec![0, 1, 2]);
    }

    #[test]
    fn smoothing_thresholds() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [50.0, 0.0, 0.0], [51.0, 0.0, 0.0], [52.0, 0.0, 0.0]];
        let idx = NeighborIndex::from_points(pts, 4);
        let m = SegmentMask::from_indices(8, &[1, 2, 3, 4]).unwrap();
        let out = segment_smoothing(&idx, &m, 4, 0.7, 1);
        assert!(out.get(0));
        assert!(!out.get(5));
        let lone = SegmentMask::from_indices(8, &[5]).unwrap();
        assert_eq!(segment_smoothing(&idx, &lone, 4, 0.7, 5), lone);
    }
}
