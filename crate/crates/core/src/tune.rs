//! Online fine-tuning: push negative-click embeddings away from positive ones.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Network, NetworkInput};
use crate::error::{Error, Result};
use crate::interact::{ClickSet, MaskDelta, Session};
use crate::scalar::{dist, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub steps: usize,
    pub step_size: f64,
    pub eps_cte: f64,
    pub max_halvings: usize,
    /// Tune additive per-point offsets when the backend has no parameters.
    pub offsets: bool,
    /// Run a fine-tune after every negative click.
    pub auto_on_negative: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { steps: 10, step_size: 1e-3, eps_cte: 0.75, max_halvings: 5, offsets: true, auto_on_negative: false }
    }
}

/// Mean over negatives of `max(eps_cte - nearest positive distance, 0)`.
pub fn finetune_energy<T: Real>(pos: &[&[T]], neg: &[&[T]], eps_cte: T) -> Result<T> {
    if pos.is_empty() {
        return Err(Error::NoPositives);
    }
    if neg.is_empty() {
        return Ok(T::zero());
    }
    let total: T = neg
        .iter()
        .map(|n| {
            let d = pos.iter().map(|p| dist(n, p)).fold(T::infinity(), |a, b| a.min(b));
            (eps_cte - d).max(T::zero())
        })
        .sum();
    Ok(total / T::from_usize_lossy(neg.len()))
}

/// Energy of the clicks in `z` and its gradient with respect to the rows of `z`.
pub fn energy_and_grad<T: Real>(z: &EmbeddingMatrix<T>, clicks: &ClickSet, eps_cte: T) -> Result<(T, EmbeddingMatrix<T>)> {
    let pos = clicks.positives();
    let neg = clicks.negatives();
    if pos.is_empty() {
        return Err(Error::NoPositives);
    }
    let mut grad = EmbeddingMatrix::zeros(z.rows(), z.dim());
    if neg.is_empty() {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / T::from_usize_lossy(neg.len());
    let mut total = T::zero();
    for &n in neg {
        let mut best = (T::infinity(), usize::MAX);
        for &p in pos {
            let d = dist(z.row(n), z.row(p));
            if d < best.0 || (d == best.0 && p < best.1) {
                best = (d, p);
            }
        }
        let (d, p) = best;
        let h = eps_cte - d;
        if h <= T::zero() {
            continue;
        }
        total += h;
        if d == T::zero() {
            continue;
        }
        let scale = inv / d;
        let diff: Vec<T> = z.row(n).iter().zip(z.row(p)).map(|(a, b)| (*a - *b) * scale).collect();
        for (g, v) in grad.row_mut(n).iter_mut().zip(&diff) {
            *g -= *v;
        }
        for (g, v) in grad.row_mut(p).iter_mut().zip(&diff) {
            *g += *v;
        }
    }
    Ok((total * inv, grad))
}

pub fn session_energy<T: Real>(session: &Session<T>, eps_cte: f64) -> Result<T> {
    Ok(energy_and_grad(session.embeddings(), session.clicks(), T::lit(eps_cte))?.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    /// Energy before the first step and after each accepted step.
    pub energy: Vec<f64>,
    pub accepted: usize,
    pub halvings: usize,
    pub delta: MaskDelta,
}

impl TuneOutcome {
    pub fn initial(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.energy.last().copied().unwrap_or(0.0)
    }
}

fn click_rows(clicks: &ClickSet) -> Vec<usize> {
    let mut rows: Vec<usize> = clicks.positives().iter().chain(clicks.negatives()).copied().collect();
    rows.sort_unstable();
    rows
}

/// Guarded descent shared by both parameterizations: `eval` returns energy and
/// gradient at the given parameters.
fn descend<T: Real, F>(params: &mut Vec<T>, cfg: &TuneConfig, mut eval: F, out: &mut TuneOutcome) -> Result<()>
where
    F: FnMut(&[T], bool) -> Result<(T, Vec<T>)>,
{
    let (mut e, mut g) = eval(params, true)?;
    out.energy.push(e.as_f64());
    for _ in 0..cfg.steps {
        if e <= T::zero() || g.iter().all(|v| *v == T::zero()) {
            break;
        }
        let mut step = T::lit(cfg.step_size);
        let mut accepted = None;
        for attempt in 0..=cfg.max_halvings {
            let trial: Vec<T> = params.iter().zip(&g).map(|(p, d)| *p - step * *d).collect();
            let (te, _) = eval(&trial, false)?;
            if te <= e {
                accepted = Some(trial);
                break;
            }
            if attempt < cfg.max_halvings {
                step /= T::lit(2.0);
                out.halvings += 1;
            }
        }
        let Some(trial) = accepted else { break };
        *params = trial;
        let next = eval(params, true)?;
        e = next.0;
        g = next.1;
        out.accepted += 1;
        out.energy.push(e.as_f64());
    }
    Ok(())
}

fn network_energy<T: Real>(
    net: &Network<T>,
    input: &NetworkInput<T>,
    clicks: &ClickSet,
    rows: &[usize],
    eps: T,
    with_grad: bool,
) -> Result<(T, Vec<T>)> {
    let (z, cache) = net.forward_rows(input, rows);
    let (e, dz) = energy_and_grad(&z, clicks, eps)?;
    let g = if with_grad { net.backward(input, &cache, &dz) } else { Vec::new() };
    Ok((e, g))
}

/// Runs `cfg.steps` guarded gradient steps on the session's energy and
/// installs the result as one undoable step. A trained network is tuned on a
/// private copy; other backends tune offsets on the session's embeddings.
pub fn finetune<T: Real>(session: &mut Session<T>, cfg: &TuneConfig) -> Result<TuneOutcome> {
    let clicks = session.clicks().clone();
    if clicks.positives().is_empty() {
        return Err(Error::NoPositives);
    }
    let eps = T::lit(cfg.eps_cte);
    let rows = click_rows(&clicks);
    let mut out = TuneOutcome::default();

    match (session.network(), session.network_input()) {
        (Some(net), Some(input)) => {
            let net: Network<T> = (**net).clone();
            let input = input.clone();
            let mut params = net.params().to_vec();
            let mut scratch = net.clone();
            descend(
                &mut params,
                cfg,
                |p, with_grad| {
                    scratch.params_mut().copy_from_slice(p);
                    network_energy(&scratch, &input, &clicks, &rows, eps, with_grad)
                },
                &mut out,
            )?;
            if out.accepted > 0 {
                let tuned = Network::from_params(net.config().clone(), params)?;
                let z = tuned.embed(&input);
                out.delta = session.replace_embeddings(Arc::new(z), Some(Arc::new(tuned)))?;
            }
        }
        _ if cfg.offsets => {
            let base = session.embeddings().clone();
            let d = base.dim();
            let mut params: Vec<T> = rows.iter().flat_map(|&r| base.row(r).to_vec()).collect();
            let mut z = (*base).clone();
            descend(
                &mut params,
                cfg,
                |p, with_grad| {
                    for (k, &r) in rows.iter().enumerate() {
                        z.row_mut(r).copy_from_slice(&p[k * d..(k + 1) * d]);
                    }
                    let (e, gz) = energy_and_grad(&z, &clicks, eps)?;
                    let g = if with_grad { rows.iter().flat_map(|&r| gz.row(r).to_vec()).collect() } else { Vec::new() };
                    Ok((e, g))
                },
                &mut out,
            )?;
            if out.accepted > 0 {
                for (k, &r) in rows.iter().enumerate() {
                    z.row_mut(r).copy_from_slice(&params[k * d..(k + 1) * d]);
                }
                out.delta = session.replace_embeddings(Arc::new(z), None)?;
            }
        }
        _ => return Err(Error::NotTunable),
    }
    Ok(out)
}

/// Adds a dense set of negative clicks with one recomputation.
pub fn expand_scribble<T: Real>(session: &mut Session<T>, indices: &[usize]) -> Result<MaskDelta> {
    session.add_negatives(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use crate::interact::ClickKind;
    use crate::postprocess::PostprocessConfig;

    #[test]
    fn energy_examples() {
        let p = [0.0, 0.0];
        let n = [0.25, 0.0];
        assert_eq!(finetune_energy::<f64>(&[&p], &[&n], 0.75).unwrap(), 0.5);
        assert_eq!(finetune_energy::<f64>(&[&p], &[], 0.75).unwrap(), 0.0);
        assert_eq!(finetune_energy::<f64>(&[&p], &[&[1.0, 0.0]], 0.75).unwrap(), 0.0);
        assert!(matches!(finetune_energy::<f64>(&[], &[&n], 0.75), Err(Error::NoPositives)));
    }

    fn session(n: usize) -> Session<f64> {
        let pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64 * 0.05, (i % 3) as f64 * 0.01, 0.0]).collect();
        let cloud = PointCloud::new(pts, vec![[0.0, 0.0, 1.0]; n]).unwrap();
        let z = crate::embedding::random_embedding(n, 4, 9);
        let mut z2 = z.clone();
        for v in z2.as_mut_slice() {
            *v *= 0.1;
        }
        Session::from_cloud(cloud, z2, 0.35, PostprocessConfig::default()).unwrap()
    }

    #[test]
    fn offsets_descend_energy() {
        let mut s = session(40);
        s.add_click(ClickKind::Positive, 3).unwrap();
        s.add_click(ClickKind::Negative, 20).unwrap();
        s.add_click(ClickKind::Negative, 30).unwrap();
        let cfg = TuneConfig { steps: 50, step_size: 0.05, ..TuneConfig::default() };
        let out = finetune(&mut s, &cfg).unwrap();
        assert!(out.accepted > 0);
        assert!(out.energy.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.last() < out.initial());
        assert_eq!(session_energy::<f64>(&s, 0.75).unwrap(), out.last());
    }

    #[test]
    fn zero_steps_and_zero_energy_leave_session_alone() {
        let mut s = session(20);
        s.add_click(ClickKind::Positive, 1).unwrap();
        let before = s.clone();
        let cfg = TuneConfig { steps: 0, ..TuneConfig::default() };
        s.add_click(ClickKind::Negative, 2).unwrap();
        let mid = s.clone();
        finetune(&mut s, &cfg).unwrap();
        assert_eq!(s, mid);
        let mut t = before.clone();
        finetune(&mut t, &TuneConfig::default()).unwrap();
        assert_eq!(t, before);
    }

    #[test]
    fn not_tunable_without_offsets() {
        let mut s = session(10);
        s.add_click(ClickKind::Positive, 1).unwrap();
        let cfg = TuneConfig { offsets: false, ..TuneConfig::default() };
        assert!(matches!(finetune(&mut s, &cfg), Err(Error::NotTunable)));
    }
}
