use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::io;
use crate::geometry::{PointCloud, SegmentMask};
use crate::scalar::Real;

/// Point cloud with a per-point segment id in `[0, K)`; every id occurs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledShape<T> {
    cloud: PointCloud<T>,
    labels: Vec<usize>,
    k: usize,
}

impl<T: Real> LabeledShape<T> {
    pub fn new(cloud: PointCloud<T>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::LengthMismatch { left: cloud.len(), right: labels.len() });
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::EmptySegment(missing));
        }
        Ok(Self { cloud, labels, k })
    }

    /// Accepts arbitrary non-negative ids and compacts them to `[0, K)` in ascending id order.
    pub fn from_raw_labels(cloud: PointCloud<T>, raw: &[i64]) -> Result<Self> {
        if raw.iter().any(|l| *l < 0) {
            return Err(Error::InvalidLabels("negative label in a training shape".into()));
        }
        let mut ids: Vec<i64> = raw.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let labels = raw.iter().map(|l| ids.binary_search(l).unwrap_or(0)).collect();
        Self::new(cloud, labels)
    }

    pub fn cloud(&self) -> &PointCloud<T> {
        &self.cloud
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Point indices of each segment, in ascending order.
    pub fn segments(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn segment_mask(&self, segments: &[usize]) -> SegmentMask {
        let mut keep = vec![false; self.k];
        for &s in segments {
            keep[s] = true;
        }
        SegmentMask::from_flags(self.labels.iter().map(|l| keep[*l]).collect())
    }

    pub fn labels_i64(&self) -> Vec<i64> {
        self.labels.iter().map(|l| *l as i64).collect()
    }

    /// Writes `<stem>.xyzn` and `<stem>.labels`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        io::save_xyzn(&stem.with_extension("xyzn"), &self.cloud)?;
        io::save_labels(&stem.with_extension("labels"), &self.labels_i64())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let cloud = io::load_cloud(&stem.with_extension("xyzn"))?;
        let labels = io::load_labels(&stem.with_extension("labels"))?;
        Self::from_raw_labels(cloud, &labels)
    }

    pub fn cast<U: Real>(&self) -> LabeledShape<U> {
        LabeledShape { cloud: self.cloud.cast(), labels: self.labels.clone(), k: self.k }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> PointCloud<f64> {
        PointCloud::new((0..n).map(|i| [i as f64, 0.0, 0.0]).collect(), vec![[0.0, 0.0, 1.0]; n]).unwrap()
    }

    #[test]
    fn rejects_gaps_and_mismatches() {
        assert!(matches!(LabeledShape::new(cloud(3), vec![0, 2, 2]), Err(Error::EmptySegment(1))));
        assert!(LabeledShape::new(cloud(3), vec![0, 1]).is_err());
        let s = LabeledShape::from_raw_labels(cloud(3), &[5, 9, 5]).unwrap();
        assert_eq!(s.labels(), &[0, 1, 0]);
        assert_eq!(s.segments(), vec![vec![0, 2], vec![1]]);
        assert!(LabeledShape::from_raw_labels(cloud(2), &[-1, 0]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = LabeledShape::new(cloud(4), vec![1, 0, 1, 0]).unwrap();
        let stem = dir.path().join("a");
        s.save(&stem).unwrap();
        assert_eq!(LabeledShape::<f64>::load(&stem).unwrap(), s);
    }
}
