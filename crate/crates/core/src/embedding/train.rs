//! Adam with cosine-annealed step size over whole-shape batches.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::LabeledShape;
use crate::geometry::NeighborIndex;
use crate::scalar::Real;

use super::loss::{total_loss, LossWeights};
use super::network::{Network, NetworkInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Shapes per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Written after every epoch when set.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            weights: LossWeights::default(),
            checkpoint: None,
        }
    }
}

/// Cosine annealing from `base` at step 0 down to 0 at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1, beta2, eps }
    }

    pub fn step<T: Real>(&mut self, params: &mut [T], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            *p = T::lit(p.as_f64() - update);
        }
    }
}

/// A training shape with its network input precomputed.
pub struct PreparedShape<T> {
    pub input: NetworkInput<T>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl<T: Real> PreparedShape<T> {
    pub fn new(shape: &LabeledShape<T>, net: &Network<T>) -> Self {
        let index = NeighborIndex::build(shape.cloud(), net.config().k_agg);
        Self {
            input: NetworkInput::prepare(shape.cloud(), &index, net.config()),
            labels: shape.labels().to_vec(),
            k: shape.segment_count(),
        }
    }
}

/// Loss of the network on one shape and its parameter gradient.
pub fn shape_loss_and_grad<T: Real>(
    net: &Network<T>,
    shape: &PreparedShape<T>,
    weights: &LossWeights,
) -> Result<(f64, Vec<T>)> {
    let (z, cache) = net.forward(&shape.input);
    let value = total_loss(&z, &shape.labels, shape.k, weights)?;
    let grad = net.backward(&shape.input, &cache, &value.grad);
    Ok((value.total.as_f64(), grad))
}

pub fn mean_loss<T: Real>(net: &Network<T>, shapes: &[PreparedShape<T>], weights: &LossWeights) -> Result<f64> {
    let losses = shapes
        .par_iter()
        .map(|s| {
            let z = net.embed(&s.input);
            total_loss(&z, &s.labels, s.k, weights).map(|v| v.total.as_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-shape loss observed during each epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Trains `net` in place.
pub fn train<T: Real>(net: &mut Network<T>, shapes: &[PreparedShape<T>], opts: &TrainOptions) -> Result<TrainReport> {
    if shapes.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    opts.weights.validate()?;
    let batch = opts.batch_size.max(1);
    let steps_per_epoch = shapes.len().div_ceil(batch);
    let total_steps = steps_per_epoch * opts.epochs;
    let mut adam = Adam::new(net.params().len(), opts.beta1, opts.beta2, opts.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    let mut report = TrainReport { epoch_loss: Vec::with_capacity(opts.epochs), steps: 0 };

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(batch) {
            let results: Vec<Result<(f64, Vec<T>)>> =
                chunk.par_iter().map(|&s| shape_loss_and_grad(net, &shapes[s], &opts.weights)).collect();
            let mut grad = vec![0.0f64; net.params().len()];
            for (r, &s) in results.into_iter().zip(chunk) {
                let (loss, g) = r?;
                if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    log::error!("non-finite loss {loss} at epoch {epoch}, shape {s}");
                    return Err(Error::NonFiniteLoss { epoch, shape: s });
                }
                epoch_sum += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b.as_f64();
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            for g in &mut grad {
                *g *= inv;
            }
            let lr = cosine_lr(opts.learning_rate, report.steps, total_steps);
            adam.step(net.params_mut(), &grad, lr);
            report.steps += 1;
        }
        let mean = epoch_sum / shapes.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        report.epoch_loss.push(mean);
        if let Some(path) = &opts.checkpoint {
            net.save(path)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::descriptor::DescriptorConfig;
    use crate::embedding::network::NetworkConfig;
    use crate::forge::{reshuffle_compose, ComposeConfig};

    fn tiny() -> (Network<f64>, Vec<PreparedShape<f64>>) {
        let cfg = NetworkConfig { hidden: 16, output: 8, k_agg: 8, descriptor: DescriptorConfig { radii: vec![0.2], bins: 4 } };
        let net = Network::init(cfg, 5);
        let cc = ComposeConfig { k_min: 2, k_max: 3, n_points: 128, ..ComposeConfig::default() };
        let shapes = (0..3)
            .map(|s| PreparedShape::new(&reshuffle_compose::<f64>(&cc, s).unwrap(), &net))
            .collect();
        (net, shapes)
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 10), 1e-3);
        assert!((cosine_lr(1e-3, 5, 10) - 5e-4).abs() < 1e-15);
        assert!(cosine_lr(1e-3, 10, 10).abs() < 1e-18);
        assert_eq!(TrainOptions::default().learning_rate, 1e-3);
    }

    #[test]
    fn one_epoch_on_one_shape_reduces_loss() {
        let (mut net, shapes) = tiny();
        let one = &shapes[..1];
        let w = LossWeights::default();
        let before = mean_loss(&net, one, &w).unwrap();
        let opts = TrainOptions { epochs: 1, batch_size: 1, ..TrainOptions::default() };
        train(&mut net, one, &opts).unwrap();
        let after = mean_loss(&net, one, &w).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn deterministic_history_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("net.ckpt");
        let opts = TrainOptions { epochs: 3, batch_size: 2, seed: 9, checkpoint: Some(ckpt.clone()), ..TrainOptions::default() };
        let (mut a, shapes) = tiny();
        let ra = train(&mut a, &shapes, &opts).unwrap();
        let (mut b, _) = tiny();
        let rb = train(&mut b, &shapes, &opts).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert_eq!(Network::<f64>::load(&ckpt).unwrap(), a);
        assert_eq!(ra.steps, 6);
    }

    #[test]
    fn nan_parameters_abort() {
        let (mut net, shapes) = tiny();
        let last = net.params().len() - 1;
        net.params_mut()[last] = f64::NAN;
        let opts = TrainOptions { epochs: 1, ..TrainOptions::default() };
        assert!(matches!(train(&mut net, &shapes, &opts), Err(Error::NonFiniteLoss { epoch: 0, .. })));
    }
}
