use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-point boolean annotation over a cloud of fixed size.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentMask {
    flags: Vec<bool>,
}

impl SegmentMask {
    pub fn empty(n: usize) -> Self {
        Self { flags: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { flags: vec![true; n] }
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            flags[i] = true;
        }
        Ok(Self { flags })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.flags[i] = v;
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn none(&self) -> bool {
        !self.flags.iter().any(|f| *f)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect()
    }

    pub fn is_subset_of(&self, other: &SegmentMask) -> bool {
        self.flags.iter().zip(&other.flags).all(|(a, b)| !*a || *b)
    }

    pub fn union_with(&mut self, other: &SegmentMask) {
        for (a, b) in self.flags.iter_mut().zip(&other.flags) {
            *a |= *b;
        }
    }

    /// Indices flagged in `self` but not in `before`, and flagged in `before` but not in `self`.
    pub fn delta_from(&self, before: &SegmentMask) -> (Vec<usize>, Vec<usize>) {
        let mut added = Vec::new();
        let mut removed = Vec::new();
        for (i, (now, was)) in self.flags.iter().zip(&before.flags).enumerate() {
            match (*now, *was) {
                (true, false) => added.push(i),
                (false, true) => removed.push(i),
                _ => {}
            }
        }
        (added, removed)
    }
}

/// Intersection over union; two empty masks score 1.
pub fn iou<T: Real>(a: &SegmentMask, b: &SegmentMask) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let (inter, union) = intersection_union(a, b);
    if union == 0 {
        return Ok(T::one());
    }
    Ok(T::from_usize_lossy(inter) / T::from_usize_lossy(union))
}

pub(crate) fn intersection_union(a: &SegmentMask, b: &SegmentMask) -> (usize, usize) {
    let mut inter = 0;
    let mut union = 0;
    for (x, y) in a.flags.iter().zip(&b.flags) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    (inter, union)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(bits: &[u8]) -> SegmentMask {
        SegmentMask::from_flags(bits.iter().map(|b| *b == 1).collect())
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou::<f64>(&m(&[1, 1, 0]), &m(&[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(iou::<f64>(&m(&[1, 0, 0]), &m(&[0, 1, 0])).unwrap(), 0.0);
        assert_eq!(iou::<f64>(&m(&[1, 1, 0, 0]), &m(&[1, 0, 1, 1])).unwrap(), 0.25);
        assert_eq!(iou::<f64>(&m(&[0, 0]), &m(&[0, 0])).unwrap(), 1.0);
        assert!(iou::<f64>(&m(&[0, 0]), &m(&[0])).is_err());
    }

    #[test]
    fn delta_lists_changes() {
        let (added, removed) = m(&[1, 0, 1, 0]).delta_from(&m(&[0, 0, 1, 1]));
        assert_eq!(added, vec![0]);
        assert_eq!(removed, vec![3]);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in prop::collection::vec(any::<bool>(), 1..64), seed in any::<u64>()) {
            let b: Vec<bool> = a.iter().enumerate().map(|(i, x)| (seed >> (i % 64)) & 1 == 1 || (*x && i % 3 == 0)).collect();
            let (a, b) = (SegmentMask::from_flags(a), SegmentMask::from_flags(b));
            let ab = iou::<f64>(&a, &b).unwrap();
            prop_assert_eq!(ab, iou::<f64>(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.none() {
                prop_assert_eq!(iou::<f64>(&a, &a).unwrap(), 1.0);
            }
        }
    }
}
