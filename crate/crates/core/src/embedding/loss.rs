//! Centric intra/inter-cluster metric losses with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dist, norm, Real};

use super::matrix::EmbeddingMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_ctr: f64,
    pub lambda_cte: f64,
    pub lambda_reg: f64,
    pub eps_ctr: f64,
    pub eps_cte: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_ctr: 1.0, lambda_cte: 1.0, lambda_reg: 1e-4, eps_ctr: 0.25, eps_cte: 0.75 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_ctr, self.lambda_cte, self.lambda_reg, self.eps_ctr, self.eps_cte];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("loss weights and margins must be finite and non-negative".into()));
        }
        if self.eps_cte <= self.eps_ctr {
            log::warn!("inter-cluster margin {} does not exceed intra-cluster margin {}", self.eps_cte, self.eps_ctr);
        }
        Ok(())
    }
}

fn check_labels(rows: usize, labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if labels.len() != rows {
        return Err(Error::RowMismatch { rows, points: labels.len() });
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::InvalidLabels(format!("label {l} outside [0, {k})")));
        }
        counts[l] += 1;
    }
    if let Some(s) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptySegment(s));
    }
    Ok(counts)
}

/// Mean embedding of each segment, as a `K x d` matrix.
pub fn segment_centers<T: Real>(z: &EmbeddingMatrix<T>, labels: &[usize], k: usize) -> Result<EmbeddingMatrix<T>> {
    let counts = check_labels(z.rows(), labels, k)?;
    Ok(centers_unchecked(z, labels, &counts))
}

fn centers_unchecked<T: Real>(z: &EmbeddingMatrix<T>, labels: &[usize], counts: &[usize]) -> EmbeddingMatrix<T> {
    let mut c = EmbeddingMatrix::zeros(counts.len(), z.dim());
    for (i, &l) in labels.iter().enumerate() {
        for (a, v) in c.row_mut(l).iter_mut().zip(z.row(i)) {
            *a += *v;
        }
    }
    for (s, &n) in counts.iter().enumerate() {
        let n = T::from_usize_lossy(n);
        for a in c.row_mut(s) {
            *a /= n;
        }
    }
    c
}

/// Mean over segments of the mean hinged distance `max(|z_j - c_i| - eps, 0)`.
pub fn centric_intra_loss<T: Real>(z: &EmbeddingMatrix<T>, labels: &[usize], k: usize, eps_ctr: T) -> Result<T> {
    Ok(intra(z, labels, k, eps_ctr, false)?.0)
}

/// Mean over ordered center pairs of `max(eps - |c_i - c_j|, 0)`; zero when `K < 2`.
pub fn centric_inter_loss<T: Real>(z: &EmbeddingMatrix<T>, labels: &[usize], k: usize, eps_cte: T) -> Result<T> {
    Ok(inter(z, labels, k, eps_cte, false)?.0)
}

/// Mean embedding norm.
pub fn reg_loss<T: Real>(z: &EmbeddingMatrix<T>) -> T {
    reg(z, false).0
}

fn intra<T: Real>(
    z: &EmbeddingMatrix<T>,
    labels: &[usize],
    k: usize,
    eps: T,
    want_grad: bool,
) -> Result<(T, Option<EmbeddingMatrix<T>>)> {
    let counts = check_labels(z.rows(), labels, k)?;
    let centers = centers_unchecked(z, labels, &counts);
    let kk = T::from_usize_lossy(k);
    let mut per_seg = vec![T::zero(); k];
    // per-point unit offsets of active hinges, pre-weighted
    let mut grad = want_grad.then(|| EmbeddingMatrix::zeros(z.rows(), z.dim()));
    let mut seg_sum = want_grad.then(|| EmbeddingMatrix::<T>::zeros(k, z.dim()));
    for (i, &l) in labels.iter().enumerate() {
        let c = centers.row(l);
        let d = dist(z.row(i), c);
        let h = d - eps;
        if h > T::zero() {
            per_seg[l] += h;
            if let (Some(g), Some(ss)) = (grad.as_mut(), seg_sum.as_mut()) {
                let w = T::one() / (kk * T::from_usize_lossy(counts[l]) * d);
                for ((gv, sv), (zv, cv)) in g.row_mut(i).iter_mut().zip(ss.row_mut(l).iter_mut()).zip(z.row(i).iter().zip(c)) {
                    let u = (*zv - *cv) * w;
                    *gv = u;
                    *sv += u;
                }
            }
        }
    }
    let loss = per_seg
        .iter()
        .zip(&counts)
        .map(|(s, n)| *s / T::from_usize_lossy(*n))
        .sum::<T>()
        / kk;
    if let (Some(g), Some(ss)) = (grad.as_mut(), seg_sum.as_ref()) {
        // the center depends on every member: subtract the segment mean of the weighted offsets
        for (i, &l) in labels.iter().enumerate() {
            let n = T::from_usize_lossy(counts[l]);
            for (gv, sv) in g.row_mut(i).iter_mut().zip(ss.row(l)) {
                *gv -= *sv / n;
            }
        }
    }
    Ok((loss, grad))
}

fn inter<T: Real>(
    z: &EmbeddingMatrix<T>,
    labels: &[usize],
    k: usize,
    eps: T,
    want_grad: bool,
) -> Result<(T, Option<EmbeddingMatrix<T>>)> {
    let counts = check_labels(z.rows(), labels, k)?;
    if k < 2 {
        return Ok((T::zero(), want_grad.then(|| EmbeddingMatrix::zeros(z.rows(), z.dim()))));
    }
    let centers = centers_unchecked(z, labels, &counts);
    let pairs = T::from_usize_lossy(k * (k - 1));
    let mut total = T::zero();
    let mut cgrad = EmbeddingMatrix::<T>::zeros(k, z.dim());
    for i in 0..k {
        for j in i + 1..k {
            let d = dist(centers.row(i), centers.row(j));
            let h = eps - d;
            if h > T::zero() {
                // both ordered pairs (i, j) and (j, i) contribute
                total += h + h;
                if want_grad && d > T::zero() {
                    let w = T::lit(2.0) / (pairs * d);
                    for a in 0..z.dim() {
                        let u = (centers.row(i)[a] - centers.row(j)[a]) * w;
                        cgrad.row_mut(i)[a] -= u;
                        cgrad.row_mut(j)[a] += u;
                    }
                }
            }
        }
    }
    let grad = want_grad.then(|| {
        let mut g = EmbeddingMatrix::zeros(z.rows(), z.dim());
        for (i, &l) in labels.iter().enumerate() {
            let n = T::from_usize_lossy(counts[l]);
            for (gv, cv) in g.row_mut(i).iter_mut().zip(cgrad.row(l)) {
                *gv = *cv / n;
            }
        }
        g
    });
    Ok((total / pairs, grad))
}

fn reg<T: Real>(z: &EmbeddingMatrix<T>, want_grad: bool) -> (T, Option<EmbeddingMatrix<T>>) {
    if z.rows() == 0 {
        return (T::zero(), want_grad.then(|| EmbeddingMatrix::zeros(0, z.dim())));
    }
    let n = T::from_usize_lossy(z.rows());
    let mut sum = T::zero();
    let mut grad = want_grad.then(|| EmbeddingMatrix::zeros(z.rows(), z.dim()));
    for i in 0..z.rows() {
        let r = norm(z.row(i));
        sum += r;
        if let Some(g) = grad.as_mut() {
            if r > T::zero() {
                for (gv, zv) in g.row_mut(i).iter_mut().zip(z.row(i)) {
                    *gv = *zv / (n * r);
                }
            }
        }
    }
    (sum / n, grad)
}

/// Weighted loss terms and the gradient of the total with respect to `Z`.
#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub total: T,
    pub ctr: T,
    pub cte: T,
    pub reg: T,
    pub grad: EmbeddingMatrix<T>,
}

/// `lambda_ctr * L_ctr + lambda_cte * L_cte + lambda_reg * L_reg` and its gradient.
/// Hinge kinks and zero norms take subgradient 0.
pub fn total_loss<T: Real>(z: &EmbeddingMatrix<T>, labels: &[usize], k: usize, w: &LossWeights) -> Result<LossValue<T>> {
    let (ctr, g_ctr) = intra(z, labels, k, T::lit(w.eps_ctr), true)?;
    let (cte, g_cte) = inter(z, labels, k, T::lit(w.eps_cte), true)?;
    let (rg, g_reg) = reg(z, true);
    let (lc, le, lr) = (T::lit(w.lambda_ctr), T::lit(w.lambda_cte), T::lit(w.lambda_reg));
    let mut grad = EmbeddingMatrix::zeros(z.rows(), z.dim());
    let (g1, g2, g3) = (g_ctr.expect("grad"), g_cte.expect("grad"), g_reg.expect("grad"));
    for (((g, a), b), c) in grad.as_mut_slice().iter_mut().zip(g1.as_slice()).zip(g2.as_slice()).zip(g3.as_slice()) {
        *g = lc * *a + le * *b + lr * *c;
    }
    Ok(LossValue { total: lc * ctr + le * cte + lr * rg, ctr, cte, reg: rg, grad })
}
