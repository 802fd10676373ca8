//! SGD with heavy-ball momentum, L2 weight decay and a per-epoch cosine
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::diffcore::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub total_epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            total_epochs: 30,
        }
    }
}

/// `base · ½(1 + cos(π·epoch/total))`
pub fn cosine_lr(base_lr: f64, epoch: usize, total_epochs: usize) -> f64 {
    let t = epoch.min(total_epochs) as f64 / total_epochs.max(1) as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Debug)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new<'a>(config: SgdConfig, params: impl IntoIterator<Item = &'a Matrix>) -> Result<Self> {
        if !(config.base_lr > 0.0) || !(0.0..1.0).contains(&config.momentum) || !(config.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {config:?}")));
        }
        if config.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be >= 1".into()));
        }
        let velocity = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Ok(Self { config, velocity })
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        cosine_lr(self.config.base_lr, epoch, self.config.total_epochs)
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    /// `v ← μ·v + g + wd·p; p ← p − lr·v`
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Matrix>,
        grads: &[Matrix],
        epoch: usize,
    ) -> Result<()> {
        let lr = self.lr(epoch);
        let SgdConfig { momentum, weight_decay, .. } = self.config;
        let mut count = 0;
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return Err(Error::Contract(format!(
                    "parameter {count}: shape {:?}, gradient {:?}, velocity {:?}",
                    p.shape(),
                    g.shape(),
                    v.shape()
                )));
            }
            for ((pv, gv), vv) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(v.as_mut_slice()) {
                *vv = momentum * *vv + gv + weight_decay * *pv;
                *pv -= lr * *vv;
            }
            count += 1;
        }
        if count != self.velocity.len() || grads.len() != count {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, got {count} with {} gradients",
                self.velocity.len(),
                grads.len()
            )));
        }
        Ok(())
    }
}
