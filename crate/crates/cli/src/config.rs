//! Flat JSON experiment configuration.

use std::path::{Path, PathBuf};

use protofair::data::{AugmentConfig, DatasetSpec};
use protofair::models::EncoderConfig;
use protofair::optim::SgdConfig;
use protofair::trainer::{BaseLoss, TrainConfig, TrainSchedule};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Every tunable of an experiment. Keys absent from the file keep these
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,

    pub n_samples: usize,
    pub input_dim: usize,
    pub content_sep: f64,
    pub bias_strength: f64,
    pub group_corr: f64,
    pub noise_sigma: f64,
    pub data_seed: u64,
    pub aug_sigma: f64,
    pub aug_drop: f64,

    pub encoder_hidden: Vec<usize>,
    pub encoder_out_dim: usize,
    pub head_hidden: usize,
    pub embed_dim: usize,

    pub base_loss: BaseLoss,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub lambda_fair: f64,
    pub tau: f64,
    pub num_clusters: usize,
    pub proto_momentum: f64,
    pub reinit_period: usize,
    pub kmeans_max_iters: usize,
    pub queue_batches: usize,

    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub probe_epochs: usize,
    pub probe_lr: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data = DatasetSpec::default();
        let train = TrainConfig::default();
        Self::from_parts(&data, &train, vec![0, 1, 2, 3, 4], PathBuf::from("out"))
    }
}

fn range<T: std::fmt::Display>(key: &str, ok: bool, value: T, expect: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Range {
            key: key.into(),
            message: format!("{value} is out of range, expected {expect}"),
        })
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl ExperimentConfig {
    pub fn from_parts(data: &DatasetSpec, train: &TrainConfig, seeds: Vec<u64>, out_dir: PathBuf) -> Self {
        let s = &train.schedule;
        Self {
            seeds,
            out_dir,
            n_samples: data.n_samples,
            input_dim: data.input_dim,
            content_sep: data.content_sep,
            bias_strength: data.bias_strength,
            group_corr: data.group_corr,
            noise_sigma: data.noise_sigma,
            data_seed: data.seed,
            aug_sigma: train.augment.sigma,
            aug_drop: train.augment.drop_rate,
            encoder_hidden: train.encoder.encoder_hidden.clone(),
            encoder_out_dim: train.encoder.encoder_out_dim,
            head_hidden: train.encoder.head_hidden,
            embed_dim: train.encoder.embed_dim,
            base_loss: s.base_loss,
            warmup_epochs: s.warmup_epochs,
            total_epochs: s.total_epochs,
            batch_size: s.batch_size,
            lambda_fair: s.lambda_fair,
            tau: s.tau,
            num_clusters: train.num_clusters,
            proto_momentum: train.proto_momentum,
            reinit_period: s.reinit_period,
            kmeans_max_iters: train.kmeans_max_iters,
            queue_batches: train.queue_batches,
            base_lr: train.sgd.base_lr,
            momentum: train.sgd.momentum,
            weight_decay: train.sgd.weight_decay,
            probe_epochs: train.probe_epochs,
            probe_lr: train.probe_lr,
        }
    }

    /// Parses a JSON document. Unknown keys and out-of-range values are
    /// reported by key name.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(CliError::Syntax)?;
        let Value::Object(map) = &value else {
            return Err(CliError::Invalid("top level must be a JSON object".into()));
        };
        let known = match serde_json::to_value(Self::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if let Some(key) = map.keys().find(|k| !known.contains_key(*k)) {
            return Err(CliError::UnknownKey(key.clone()));
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        range("seeds", !self.seeds.is_empty(), "[]", "at least one seed")?;
        range("n_samples", self.n_samples >= 20, self.n_samples, ">= 20")?;
        range("input_dim", self.input_dim >= 3, self.input_dim, ">= 3")?;
        range("content_sep", finite(self.content_sep) && self.content_sep > 0.0, self.content_sep, "> 0")?;
        range("bias_strength", finite(self.bias_strength) && self.bias_strength >= 0.0, self.bias_strength, ">= 0")?;
        range("group_corr", (0.5..=1.0).contains(&self.group_corr), self.group_corr, "[0.5, 1]")?;
        range("noise_sigma", finite(self.noise_sigma) && self.noise_sigma >= 0.0, self.noise_sigma, ">= 0")?;
        range("aug_sigma", finite(self.aug_sigma) && self.aug_sigma >= 0.0, self.aug_sigma, ">= 0")?;
        range("aug_drop", (0.0..=1.0).contains(&self.aug_drop), self.aug_drop, "[0, 1]")?;
        range("encoder_hidden", !self.encoder_hidden.contains(&0), "0", "widths >= 1")?;
        range("encoder_out_dim", self.encoder_out_dim >= 1, self.encoder_out_dim, ">= 1")?;
        range("head_hidden", self.head_hidden >= 1, self.head_hidden, ">= 1")?;
        range("embed_dim", self.embed_dim >= 1, self.embed_dim, ">= 1")?;
        range("total_epochs", self.total_epochs >= 1, self.total_epochs, ">= 1")?;
        range("warmup_epochs", self.warmup_epochs <= self.total_epochs, self.warmup_epochs, "<= total_epochs")?;
        range("batch_size", self.batch_size >= 2, self.batch_size, ">= 2")?;
        range("lambda_fair", finite(self.lambda_fair) && self.lambda_fair >= 0.0, self.lambda_fair, ">= 0")?;
        range("tau", finite(self.tau) && self.tau > 0.0, self.tau, "> 0")?;
        range("num_clusters", self.num_clusters >= 2, self.num_clusters, ">= 2")?;
        range("proto_momentum", (0.0..1.0).contains(&self.proto_momentum), self.proto_momentum, "[0, 1)")?;
        range("reinit_period", self.reinit_period >= 1, self.reinit_period, ">= 1")?;
        range("kmeans_max_iters", self.kmeans_max_iters >= 1, self.kmeans_max_iters, ">= 1")?;
        range("queue_batches", self.queue_batches >= 1, self.queue_batches, ">= 1")?;
        range("base_lr", finite(self.base_lr) && self.base_lr > 0.0, self.base_lr, "> 0")?;
        range("momentum", (0.0..1.0).contains(&self.momentum), self.momentum, "[0, 1)")?;
        range("weight_decay", finite(self.weight_decay) && self.weight_decay >= 0.0, self.weight_decay, ">= 0")?;
        range("probe_epochs", self.probe_epochs >= 1, self.probe_epochs, ">= 1")?;
        range("probe_lr", finite(self.probe_lr) && self.probe_lr > 0.0, self.probe_lr, "> 0")?;
        let n_train = self.n_samples * 70 / 100;
        range("num_clusters", self.num_clusters <= n_train, self.num_clusters, "<= training split size")?;
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_samples: self.n_samples,
            input_dim: self.input_dim,
            n_content_classes: 2,
            content_sep: self.content_sep,
            bias_strength: self.bias_strength,
            group_corr: self.group_corr,
            noise_sigma: self.noise_sigma,
            seed: self.data_seed,
        }
    }

    /// Training configuration for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            schedule: TrainSchedule {
                warmup_epochs: self.warmup_epochs,
                total_epochs: self.total_epochs,
                batch_size: self.batch_size,
                reinit_period: self.reinit_period,
                base_loss: self.base_loss,
                lambda_fair: self.lambda_fair,
                tau: self.tau,
                seed,
            },
            encoder: EncoderConfig {
                input_dim: self.input_dim,
                encoder_hidden: self.encoder_hidden.clone(),
                encoder_out_dim: self.encoder_out_dim,
                head_hidden: self.head_hidden,
                embed_dim: self.embed_dim,
            },
            augment: AugmentConfig {
                sigma: self.aug_sigma,
                drop_rate: self.aug_drop,
            },
            sgd: SgdConfig {
                base_lr: self.base_lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                total_epochs: self.total_epochs,
            },
            num_clusters: self.num_clusters,
            proto_momentum: self.proto_momentum,
            kmeans_max_iters: self.kmeans_max_iters,
            queue_batches: self.queue_batches,
            probe_epochs: self.probe_epochs,
            probe_lr: self.probe_lr,
        }
    }
}
