//! Two-phase training loop.
//!
//! Warmup epochs optimize the base loss alone. At the first post-warmup
//! epoch the prototypes are fitted by K-Means over the whole training set,
//! and from then on every batch adds `λ·(L_within + L_cross)`. Per batch:
//! augment, forward both heads, assign clusters from the detached cluster
//! head, EMA-update the prototypes, compute the fairness loss against the
//! queue as it was before this batch, enqueue the batch, backpropagate and
//! take an SGD step.
//!
//! The cluster head receives no gradient from either loss, so it is not
//! registered with the optimizer.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentConfig, Dataset, Split};
use crate::diffcore::{Graph, Matrix, Tensor};
use crate::eval::{probe_and_score, ProbeResult, DEFAULT_PROBE_EPOCHS, DEFAULT_PROBE_LR};
use crate::losses::{protofair_loss, simclr_loss, supcon_loss, total_loss, FairnessTerms, LossConfig};
use crate::models::{encode, project_cluster, project_contrastive, EncoderConfig, Model, ModelVars};
use crate::optim::{Sgd, SgdConfig};
use crate::prototypes::{KMeans, PrototypeBank, DEFAULT_MAX_ITERS};
use crate::queue::FeatureQueue;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLoss {
    Simclr,
    Supcon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Base loss only, no prototypes or queue.
    Baseline,
    /// Base loss plus the fairness regularizer after warmup.
    Protofair,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Protofair => "protofair",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub reinit_period: usize,
    pub base_loss: BaseLoss,
    pub lambda_fair: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            warmup_epochs: 10,
            total_epochs: 30,
            batch_size: 64,
            reinit_period: 5,
            base_loss: BaseLoss::Simclr,
            lambda_fair: 0.3,
            tau: 0.1,
            seed: 0,
        }
    }
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
    pub sgd: SgdConfig,
    pub num_clusters: usize,
    pub proto_momentum: f64,
    pub kmeans_max_iters: usize,
    /// Batches retained in the feature queue.
    pub queue_batches: usize,
    pub probe_epochs: usize,
    pub probe_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: TrainSchedule::default(),
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
            sgd: SgdConfig::default(),
            num_clusters: 10,
            proto_momentum: 0.99,
            kmeans_max_iters: DEFAULT_MAX_ITERS,
            queue_batches: 8,
            probe_epochs: DEFAULT_PROBE_EPOCHS,
            probe_lr: DEFAULT_PROBE_LR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.total_epochs == 0 || s.warmup_epochs > s.total_epochs {
            return Err(Error::Config(format!(
                "need 0 <= warmup_epochs ({}) <= total_epochs ({}) and total_epochs >= 1",
                s.warmup_epochs, s.total_epochs
            )));
        }
        if s.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.queue_batches == 0 {
            return Err(Error::Config("queue_batches must be >= 1".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Config("kmeans_max_iters must be >= 1".into()));
        }
        if self.sgd.total_epochs != s.total_epochs {
            return Err(Error::Config("optimizer schedule length differs from total_epochs".into()));
        }
        LossConfig { tau: s.tau, lambda_fair: s.lambda_fair }.validate()?;
        self.encoder.validate()?;
        self.augment.validate()?;
        PrototypeBank::new(self.num_clusters, self.encoder.embed_dim, self.proto_momentum, s.reinit_period)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub fairness_active: bool,
    pub batches: usize,
    pub mean_base: f64,
    pub mean_within: f64,
    pub mean_cross: f64,
    pub mean_total: f64,
    /// Whether prototypes were (re)fitted at the start of this epoch.
    pub kmeans_refit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub base: f64,
    pub within: f64,
    pub cross: f64,
    pub total: f64,
}

/// Graph handles produced by one batch's forward pass.
pub struct BatchForward {
    pub graph: Graph,
    pub vars: ModelVars,
    pub z: Tensor,
    pub base: Tensor,
    pub fairness: Option<FairnessTerms>,
    pub total: Tensor,
}

pub struct Trainer<'a> {
    config: TrainConfig,
    variant: Variant,
    train: &'a Split,
    model: Model,
    sgd: Sgd,
    bank: PrototypeBank,
    queue: FeatureQueue,
    shuffle_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    kmeans_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, variant: Variant, train: &'a Split) -> Result<Self> {
        config.validate()?;
        if train.input_dim() != config.encoder.input_dim {
            return Err(Error::Config(format!(
                "data has {} features, encoder expects {}",
                train.input_dim(),
                config.encoder.input_dim
            )));
        }
        if train.len() < config.num_clusters {
            return Err(Error::Config("fewer training samples than clusters".into()));
        }
        let seed = config.schedule.seed;
        let model = Model::init(config.encoder.clone(), &mut stream(seed, Stream::Init))?;
        let sgd = Sgd::new(config.sgd, model.encoder.params().chain(model.contrastive_head.params()))?;
        let bank = PrototypeBank::new(
            config.num_clusters,
            config.encoder.embed_dim,
            config.proto_momentum,
            config.schedule.reinit_period,
        )?
        .with_max_iters(config.kmeans_max_iters);
        // both views of every sample are enqueued
        let queue = FeatureQueue::new(
            config.encoder.embed_dim,
            config.queue_batches * 2 * config.schedule.batch_size,
        );
        Ok(Self {
            variant,
            train,
            model,
            sgd,
            bank,
            queue,
            shuffle_rng: stream(seed, Stream::Shuffle),
            augment_rng: stream(seed, Stream::Augment),
            kmeans_rng: stream(seed, Stream::KMeans),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn bank(&self) -> &PrototypeBank {
        &self.bank
    }

    pub fn queue(&self) -> &FeatureQueue {
        &self.queue
    }

    pub fn into_parts(self) -> (Model, PrototypeBank) {
        (self.model, self.bank)
    }

    pub fn fairness_active(&self, epoch: usize) -> bool {
        self.variant == Variant::Protofair && epoch >= self.config.schedule.warmup_epochs
    }

    /// Fits the prototypes at the end of warmup and whenever a refresh is due.
    pub fn prepare_epoch(&mut self, epoch: usize) -> Result<Option<KMeans>> {
        if !self.fairness_active(epoch) {
            return Ok(None);
        }
        if self.bank.is_initialized() && !self.bank.reinit_due(epoch)? {
            return Ok(None);
        }
        let hbar = self.model.cluster_embeddings(&self.train.x)?;
        let km = self.bank.kmeans_init(&hbar, epoch, &mut self.kmeans_rng)?;
        Ok(Some(km))
    }

    /// Seeded shuffle split into batches; a trailing batch smaller than two
    /// samples is dropped.
    pub fn epoch_batches(&mut self) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.train.len()).collect();
        idx.shuffle(&mut self.shuffle_rng);
        idx.chunks(self.config.schedule.batch_size)
            .filter(|c| c.len() >= 2)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// Forward pass for one batch of two stacked views. Mutates the
    /// prototypes (EMA) and the queue when the fairness term is active.
    pub fn forward_batch(&mut self, views: &Matrix, sensitive: &[u8], targets: &[u8], epoch: usize) -> Result<BatchForward> {
        let sched = &self.config.schedule;
        let (tau, lambda, base_loss) = (sched.tau, sched.lambda_fair, sched.base_loss);
        let mut g = Graph::new();
        let vars = self.model.bind(&mut g, true);
        let x = g.constant(views.clone());
        let h = encode(&mut g, &vars.encoder, x)?;
        let z = project_contrastive(&mut g, &vars.contrastive_head, h)?;
        let base = match base_loss {
            BaseLoss::Simclr => simclr_loss(&mut g, z, tau)?,
            BaseLoss::Supcon => supcon_loss(&mut g, z, targets, tau)?,
        };

        let (fairness, total) = if self.fairness_active(epoch) {
            let hbar = project_cluster(&mut g, &vars.cluster_head, h)?;
            let hbar = g.detach(hbar);
            let hbar = g.value(hbar).clone();
            let cluster = self.bank.assign(&hbar)?;
            self.bank.ema_update(&hbar, &cluster)?;

            let snapshot = self.queue.snapshot();
            let terms = protofair_loss(&mut g, z, &cluster, sensitive, &snapshot, tau)?;
            let z_values = g.value(z).clone();
            self.queue.enqueue_batch(&z_values, &cluster, sensitive)?;

            let total = total_loss(&mut g, base, terms.total, lambda)?;
            (Some(terms), total)
        } else {
            (None, base)
        };

        Ok(BatchForward {
            graph: g,
            vars,
            z,
            base,
            fairness,
            total,
        })
    }

    /// One optimization step on the given training rows.
    pub fn step(&mut self, batch: &[usize], epoch: usize) -> Result<StepMetrics> {
        let x = self.train.x.select_rows(batch);
        let (v1, v2) = augment(&x, &self.config.augment, &mut self.augment_rng);
        let views = Matrix::vstack(&[&v1, &v2]);
        let s: Vec<u8> = batch.iter().map(|&i| self.train.s[i]).collect();
        let sensitive: Vec<u8> = s.iter().chain(&s).copied().collect();
        let targets: Vec<u8> = batch.iter().map(|&i| self.train.y[i]).collect();

        let mut fwd = self.forward_batch(&views, &sensitive, &targets, epoch)?;
        fwd.graph.backward(fwd.total)?;

        let g = &fwd.graph;
        let mut grads = fwd.vars.encoder.grads(g);
        grads.extend(fwd.vars.contrastive_head.grads(g));
        let params = self.model.encoder.params_mut().chain(self.model.contrastive_head.params_mut());
        self.sgd.step(params, &grads, epoch)?;

        let scalar = |t: Tensor| g.value(t).item();
        let (within, cross) = fwd
            .fairness
            .map_or((0.0, 0.0), |t| (scalar(t.within), scalar(t.cross)));
        let metrics = StepMetrics {
            base: scalar(fwd.base),
            within,
            cross,
            total: scalar(fwd.total),
        };
        if !metrics.total.is_finite() {
            return Err(Error::Contract(format!("non-finite loss at epoch {epoch}")));
        }
        Ok(metrics)
    }

    pub fn train_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
        let refit = self.prepare_epoch(epoch)?.is_some();
        let batches = self.epoch_batches();
        let mut sums = [0.0; 4];
        for batch in &batches {
            let m = self.step(batch, epoch)?;
            for (acc, v) in sums.iter_mut().zip([m.base, m.within, m.cross, m.total]) {
                *acc += v;
            }
        }
        let n = batches.len().max(1) as f64;
        Ok(EpochMetrics {
            epoch,
            lr: self.sgd.lr(epoch),
            fairness_active: self.fairness_active(epoch),
            batches: batches.len(),
            mean_base: sums[0] / n,
            mean_within: sums[1] / n,
            mean_cross: sums[2] / n,
            mean_total: sums[3] / n,
            kmeans_refit: refit,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub model: Model,
    pub bank: PrototypeBank,
    pub epochs: Vec<EpochMetrics>,
    pub probe: ProbeResult,
    /// Frozen encoder features of the test split.
    pub test_features: Matrix,
}

/// Trains for the full schedule, then fits a linear probe on frozen train
/// features and scores it on the test split.
pub fn run(config: &TrainConfig, variant: Variant, data: &Dataset) -> Result<RunOutput> {
    let mut trainer = Trainer::new(config.clone(), variant, &data.train)?;
    let mut epochs = Vec::with_capacity(config.schedule.total_epochs);
    for epoch in 0..config.schedule.total_epochs {
        epochs.push(trainer.train_epoch(epoch)?);
    }
    let (model, bank) = trainer.into_parts();
    let train_features = model.features(&data.train.x)?;
    let test_features = model.features(&data.test.x)?;
    let probe = probe_and_score(
        &train_features,
        &data.train.y,
        &test_features,
        &data.test.y,
        &data.test.s,
        config.probe_epochs,
        config.probe_lr,
    )?;
    Ok(RunOutput {
        model,
        bank,
        epochs,
        probe,
        test_features,
    })
}
