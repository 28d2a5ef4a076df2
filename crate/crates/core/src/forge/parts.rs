//! Ground-truth part masks for synthetic shapes: unions of touching primitives.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{NeighborIndex, SegmentMask};
use crate::scalar::Real;

use super::shape::LabeledShape;

/// Neighbor count defining contact between two segments.
pub const CONTACT_K: usize = 8;

/// Segment adjacency: `a` and `b` touch when some point of one has a point of
/// the other among its `CONTACT_K` nearest neighbors.
pub fn segment_adjacency<T: Real>(shape: &LabeledShape<T>, index: &NeighborIndex<T>) -> Vec<Vec<bool>> {
    let k = shape.segment_count();
    let labels = shape.labels();
    let mut adj = vec![vec![false; k]; k];
    let kk = CONTACT_K.min(index.width());
    for i in 0..shape.len() {
        for &j in index.neighbors(i, kk) {
            let (a, b) = (labels[i], labels[j]);
            if a != b {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
    }
    adj
}

/// A part drawn as a connected union of segments.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPart {
    pub segments: Vec<usize>,
    pub mask: SegmentMask,
}

/// Draws a part: a target size uniform in `[1, max_segments]`, grown from a
/// random seed segment through random adjacent segments.
pub fn random_part<T: Real>(
    shape: &LabeledShape<T>,
    adjacency: &[Vec<bool>],
    max_segments: usize,
    seed: u64,
) -> SyntheticPart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = shape.segment_count();
    let target = rng.random_range(1..=max_segments.max(1)).min(k);
    let mut chosen = vec![rng.random_range(0..k)];
    while chosen.len() < target {
        let frontier: Vec<usize> = (0..k)
            .filter(|s| !chosen.contains(s) && chosen.iter().any(|c| adjacency[*c][*s]))
            .collect();
        match frontier.choose(&mut rng) {
            Some(&s) => chosen.push(s),
            None => break,
        }
    }
    chosen.sort_unstable();
    let mask = shape.segment_mask(&chosen);
    SyntheticPart { segments: chosen, mask }
}
