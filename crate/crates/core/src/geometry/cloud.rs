use crate::error::{Error, Result};
use crate::scalar::Real;

/// Oriented point set: positions plus unit normals, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    positions: Vec<[T; 3]>,
    normals: Vec<[T; 3]>,
}

fn unit<T: Real>(n: [T; 3]) -> Option<[T; 3]> {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !(len > T::zero()) || !len.is_finite() {
        return None;
    }
    Some([n[0] / len, n[1] / len, n[2] / len])
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud, renormalizing every normal to unit length.
    pub fn new(positions: Vec<[T; 3]>, normals: Vec<[T; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if positions.len() != normals.len() {
            return Err(Error::LengthMismatch { left: positions.len(), right: normals.len() });
        }
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(index, n)| unit(n).ok_or(Error::ZeroNormal { index }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { positions, normals })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[T; 3]] {
        &self.positions
    }

    pub fn normals(&self) -> &[[T; 3]] {
        &self.normals
    }

    pub fn position(&self, i: usize) -> &[T; 3] {
        &self.positions[i]
    }

    pub fn normal(&self, i: usize) -> &[T; 3] {
        &self.normals[i]
    }

    /// Selects the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
        }
    }

    pub fn centroid(&self) -> [T; 3] {
        let mut c = [T::zero(); 3];
        for p in &self.positions {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        let n = T::from_usize_lossy(self.len());
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        let conv = |v: &[T; 3]| [U::lit(v[0].as_f64()), U::lit(v[1].as_f64()), U::lit(v[2].as_f64())];
        PointCloud {
            positions: self.positions.iter().map(conv).collect(),
            normals: self.normals.iter().map(conv).collect(),
        }
    }
}

/// Translates the centroid to the origin and scales so the farthest point has norm 1.
pub fn normalize_cloud<T: Real>(cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
    let (out, _, _) = normalize_with_transform(cloud)?;
    Ok(out)
}

/// Same as [`normalize_cloud`], also returning the applied centroid and scale
/// (`normalized = (p - centroid) / scale`).
pub fn normalize_with_transform<T: Real>(cloud: &PointCloud<T>) -> Result<(PointCloud<T>, [T; 3], T)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let c = cloud.centroid();
    let mut max_sq = T::zero();
    let mut centered = Vec::with_capacity(cloud.len());
    for p in &cloud.positions {
        let q = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        max_sq = max_sq.max(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
        centered.push(q);
    }
    let scale = max_sq.sqrt();
    let first = cloud.positions[0];
    if !(scale > T::zero()) || cloud.positions.iter().all(|p| *p == first) {
        return Err(Error::ZeroExtent);
    }
    for q in &mut centered {
        for a in q.iter_mut() {
            *a /= scale;
        }
    }
    let normals = cloud.normals.iter().map(|n| unit(*n).unwrap_or(*n)).collect();
    Ok((PointCloud { positions: centered, normals }, c, scale))
}
