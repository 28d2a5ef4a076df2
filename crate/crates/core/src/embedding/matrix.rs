use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::io::write_atomic;
use crate::scalar::Real;

/// Row-major `N x d` matrix of per-point embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingMatrix<T> {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, data: vec![T::zero(); rows * dim] }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::LengthMismatch { left: data.len(), right: rows * dim });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::LengthMismatch { left: r.len(), right: dim });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), dim, data })
    }

    /// One-hot rows of the given labels, `d = k`.
    pub fn one_hot(labels: &[usize], k: usize) -> Self {
        let mut m = Self::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            m.row_mut(i)[l] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix { rows: self.rows, dim: self.dim, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }

    /// Binary layout: `u32 N`, `u32 d` then `N * d` row-major `f32`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.data.len());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse { line: 0, message: format!("embedding file: {m}") };
        if bytes.len() < 8 {
            return Err(bad("truncated header"));
        }
        let rows = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != rows * dim * 4 {
            return Err(bad(&format!("expected {} payload bytes, found {}", rows * dim * 4, body.len())));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        Ok(Self { rows, dim, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bytes_round_trip(rows in 0usize..20, dim in 1usize..9, seed in any::<u32>()) {
            let data: Vec<f64> = (0..rows * dim).map(|i| ((i as u32).wrapping_mul(seed) as f32 / 7.0) as f64).collect();
            let m = EmbeddingMatrix::from_vec(rows, dim, data).unwrap();
            let bytes = m.to_bytes();
            let back = EmbeddingMatrix::<f64>::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn rejects_truncated() {
        let m = EmbeddingMatrix::<f32>::zeros(3, 2);
        let b = m.to_bytes();
        assert!(EmbeddingMatrix::<f32>::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(EmbeddingMatrix::<f32>::from_bytes(&b[..4]).is_err());
    }
}
