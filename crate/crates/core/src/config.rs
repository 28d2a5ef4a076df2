//! Hyper-parameter file: one flat JSON document, every field optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::LossWeights;
use crate::error::{Error, Result};
use crate::postprocess::PostprocessConfig;
use crate::simulate::SimConfig;
use crate::tune::TuneConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub lambda_ctr: f64,
    pub lambda_cte: f64,
    pub lambda_reg: f64,
    pub eps_ctr: f64,
    pub eps_cte: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_neighbor: usize,
    pub n_iter: usize,
    pub n_smooth: usize,
    pub finetune_steps: usize,
    pub finetune_step_size: f64,
    pub finetune_max_halvings: usize,
    pub finetune_offsets: bool,
    pub auto_finetune: bool,
    pub pool_size: usize,
    pub cap: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        let w = LossWeights::default();
        let p = PostprocessConfig::default();
        let t = TuneConfig::default();
        let s = SimConfig::default();
        Self {
            lambda_ctr: w.lambda_ctr,
            lambda_cte: w.lambda_cte,
            lambda_reg: w.lambda_reg,
            eps_ctr: w.eps_ctr,
            eps_cte: w.eps_cte,
            alpha: crate::interact::DEFAULT_ALPHA,
            gamma: p.gamma,
            n_neighbor: p.n_neighbor,
            n_iter: p.n_iter,
            n_smooth: p.n_smooth,
            finetune_steps: t.steps,
            finetune_step_size: t.step_size,
            finetune_max_halvings: t.max_halvings,
            finetune_offsets: t.offsets,
            auto_finetune: t.auto_on_negative,
            pool_size: s.pool_size,
            cap: s.cap,
        }
    }
}

impl HyperParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let hp: Self = serde_json::from_str(text)?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.n_neighbor == 0 || self.n_smooth == 0 {
            return Err(Error::InvalidArgument("neighbor counts must be at least 1".into()));
        }
        if !(self.finetune_step_size > 0.0) {
            return Err(Error::InvalidArgument("fine-tune step size must be positive".into()));
        }
        if self.cap == 0 {
            return Err(Error::InvalidArgument("click cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_ctr: self.lambda_ctr,
            lambda_cte: self.lambda_cte,
            lambda_reg: self.lambda_reg,
            eps_ctr: self.eps_ctr,
            eps_cte: self.eps_cte,
        }
    }

    pub fn postprocess(&self, outlier_removal: bool, smoothing: bool) -> PostprocessConfig {
        PostprocessConfig {
            outlier_removal,
            smoothing,
            n_neighbor: self.n_neighbor,
            n_smooth: self.n_smooth,
            gamma: self.gamma,
            n_iter: self.n_iter,
        }
    }

    pub fn tune(&self) -> TuneConfig {
        TuneConfig {
            steps: self.finetune_steps,
            step_size: self.finetune_step_size,
            eps_cte: self.eps_cte,
            max_halvings: self.finetune_max_halvings,
            offsets: self.finetune_offsets,
            auto_on_negative: self.auto_finetune,
        }
    }

    pub fn sim(&self, finetune: bool) -> SimConfig {
        SimConfig { cap: self.cap, pool_size: self.pool_size, exhaustive: false, finetune, tune: self.tune() }
    }
}
