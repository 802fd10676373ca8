//! Base contrastive objectives and the pseudo-counterfactual fairness
//! regularizer.
//!
//! Every loss here has the same shape: for each anchor `i` with a non-empty
//! positive set `P_i`, average `-log(exp(s_ij) / Σ_k exp(s_ik))` over
//! `j ∈ P_i`, then average over anchors, where `s = sim / τ` and `k` ranges
//! over a loss-specific candidate set. They differ only in which rows are
//! candidates and which are positives, so they all reduce to
//! [`masked_contrastive`].

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Matrix, Tensor};
use crate::prototypes::check_unit_rows;
use crate::queue::QueueSnapshot;
use crate::{Error, Result};

/// Per-sample annotations of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchAnnotations {
    pub sensitive: Vec<u8>,
    /// Detached hard cluster assignments.
    pub cluster: Vec<usize>,
    pub target: Option<Vec<u8>>,
}

impl BatchAnnotations {
    pub fn validate(&self, num_clusters: usize) -> Result<()> {
        let n = self.sensitive.len();
        if self.cluster.len() != n || self.target.as_ref().is_some_and(|t| t.len() != n) {
            return Err(Error::Contract("annotation lengths differ".into()));
        }
        if let Some(&s) = self.sensitive.iter().find(|&&s| s > 1) {
            return Err(Error::Contract(format!("sensitive attribute {s} is not binary")));
        }
        if let Some(&k) = self.cluster.iter().find(|&&k| k >= num_clusters) {
            return Err(Error::Contract(format!("cluster id {k} out of range for K={num_clusters}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda_fair: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            lambda_fair: 0.3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda_fair >= 0.0 && self.lambda_fair.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_fair must be non-negative, got {}",
                self.lambda_fair
            )));
        }
        Ok(())
    }
}

/// Positive index sets per anchor plus the anchors that have any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositiveSets {
    pub sets: Vec<Vec<usize>>,
    pub valid: Vec<usize>,
}

impl PositiveSets {
    fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        let valid = sets
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(i, _)| i)
            .collect();
        Self { sets, valid }
    }

    pub fn pair_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// In-batch pseudo-counterfactual partners: other samples in the same
/// cluster whose sensitive attribute differs.
pub fn positive_sets(cluster: &[usize], sensitive: &[u8]) -> Result<PositiveSets> {
    if cluster.len() != sensitive.len() {
        return Err(Error::Contract("cluster and sensitive lengths differ".into()));
    }
    let n = cluster.len();
    let sets = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && cluster[j] == cluster[i] && sensitive[j] != sensitive[i])
                .collect()
        })
        .collect();
    Ok(PositiveSets::from_sets(sets))
}

/// Partners for each batch sample among the queued entries.
pub fn queue_positive_sets(cluster: &[usize], sensitive: &[u8], queue: &QueueSnapshot) -> Result<PositiveSets> {
    if cluster.len() != sensitive.len() {
        return Err(Error::Contract("cluster and sensitive lengths differ".into()));
    }
    let sets = cluster
        .iter()
        .zip(sensitive)
        .map(|(&k, &s)| {
            queue
                .cluster
                .iter()
                .zip(&queue.sensitive)
                .enumerate()
                .filter(|(_, (&qk, &qs))| qk == k && qs != s)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok(PositiveSets::from_sets(sets))
}

/// Shared core of every loss in this module.
///
/// `anchors` is n×d, `candidates` m×d. `in_denominator[i*m + j]` selects the
/// candidates summed in anchor `i`'s denominator; `positives` must be a
/// subset of it. Returns a gradient-free zero when no anchor has positives.
pub fn masked_contrastive(
    g: &mut Graph,
    anchors: Tensor,
    candidates: Tensor,
    in_denominator: &[bool],
    positives: &PositiveSets,
    tau: f64,
) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    let n = g.shape(anchors).0;
    let m = g.shape(candidates).0;
    if positives.sets.len() != n || in_denominator.len() != n * m {
        return Err(Error::Contract("positive sets do not match the anchor count".into()));
    }
    if positives.valid.is_empty() {
        return Ok(g.constant(Matrix::scalar(0.0)));
    }
    for &i in &positives.valid {
        for &j in &positives.sets[i] {
            if j >= m || !in_denominator[i * m + j] {
                return Err(Error::Contract(format!("positive ({i}, {j}) missing from the denominator")));
            }
        }
    }

    let v = positives.valid.len() as f64;
    let mut row_w = Matrix::zeros(n, 1);
    let mut pair_w = Matrix::zeros(n, m);
    for &i in &positives.valid {
        let p = &positives.sets[i];
        row_w.set(i, 0, 1.0 / v);
        let w = 1.0 / (v * p.len() as f64);
        for &j in p {
            pair_w.set(i, j, pair_w.get(i, j) + w);
        }
    }

    let sim = g.matmul_nt(anchors, candidates)?;
    let logits = g.scale(sim, 1.0 / tau);
    let lse = g.masked_row_lse(logits, in_denominator)?;
    let denom_term = g.weighted_sum(lse, row_w)?;
    let num_term = g.weighted_sum(logits, pair_w)?;
    Ok(g.sub(denom_term, num_term)?)
}

fn non_self_mask(n: usize) -> Vec<bool> {
    let mut mask = vec![true; n * n];
    for i in 0..n {
        mask[i * n + i] = false;
    }
    mask
}

/// Within-batch fairness loss; the denominator spans every non-self row.
pub fn within_batch_loss(g: &mut Graph, z: Tensor, positives: &PositiveSets, tau: f64) -> Result<Tensor> {
    check_unit_rows(g.value(z), "embedding")?;
    let n = g.shape(z).0;
    masked_contrastive(g, z, z, &non_self_mask(n), positives, tau)
}

/// Cross-batch fairness loss against queued (detached) embeddings; the
/// denominator spans every queue entry.
pub fn cross_batch_loss(
    g: &mut Graph,
    z: Tensor,
    queue: &QueueSnapshot,
    positives: &PositiveSets,
    tau: f64,
) -> Result<Tensor> {
    if queue.is_empty() || positives.valid.is_empty() {
        return Ok(g.constant(Matrix::scalar(0.0)));
    }
    check_unit_rows(g.value(z), "embedding")?;
    check_unit_rows(&queue.z, "queue embedding")?;
    if queue.z.cols() != g.shape(z).1 {
        return Err(Error::Contract("queue and batch embedding widths differ".into()));
    }
    let n = g.shape(z).0;
    let keys = g.constant(queue.z.clone());
    masked_contrastive(g, z, keys, &vec![true; n * queue.len()], positives, tau)
}

/// The two fairness components and their sum.
#[derive(Clone, Copy, Debug)]
pub struct FairnessTerms {
    pub within: Tensor,
    pub cross: Tensor,
    pub total: Tensor,
}

/// Within-batch plus cross-batch fairness loss for one batch.
pub fn protofair_loss(
    g: &mut Graph,
    z: Tensor,
    cluster: &[usize],
    sensitive: &[u8],
    queue: &QueueSnapshot,
    tau: f64,
) -> Result<FairnessTerms> {
    if g.shape(z).0 != cluster.len() {
        return Err(Error::Contract("annotations do not match the batch".into()));
    }
    let p = positive_sets(cluster, sensitive)?;
    let within = within_batch_loss(g, z, &p, tau)?;
    let pq = queue_positive_sets(cluster, sensitive, queue)?;
    let cross = cross_batch_loss(g, z, queue, &pq, tau)?;
    let total = g.add(within, cross)?;
    Ok(FairnessTerms { within, cross, total })
}

fn check_two_views(g: &Graph, z: Tensor) -> Result<usize> {
    let rows = g.shape(z).0;
    if rows == 0 || rows % 2 != 0 {
        return Err(Error::Contract(format!(
            "two-view batch needs an even, non-zero row count, got {rows}"
        )));
    }
    check_unit_rows(g.value(z), "embedding")?;
    Ok(rows / 2)
}

/// NT-Xent over block-ordered views: rows `[0, B)` are view one, `[B, 2B)`
/// view two.
pub fn simclr_loss(g: &mut Graph, z: Tensor, tau: f64) -> Result<Tensor> {
    let b = check_two_views(g, z)?;
    let n = 2 * b;
    let sets = (0..n).map(|i| vec![(i + b) % n]).collect();
    masked_contrastive(g, z, z, &non_self_mask(n), &PositiveSets::from_sets(sets), tau)
}

/// Supervised contrastive loss (positives averaged outside the log).
/// `targets` holds one label per sample and is shared by both views.
pub fn supcon_loss(g: &mut Graph, z: Tensor, targets: &[u8], tau: f64) -> Result<Tensor> {
    let b = check_two_views(g, z)?;
    if targets.len() != b {
        return Err(Error::Contract(format!("{} targets for {b} samples", targets.len())));
    }
    let n = 2 * b;
    let label = |i: usize| targets[i % b];
    let sets = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && label(j) == label(i)).collect())
        .collect();
    masked_contrastive(g, z, z, &non_self_mask(n), &PositiveSets::from_sets(sets), tau)
}

/// `base + λ·cf`
pub fn total_loss(g: &mut Graph, base: Tensor, cf: Tensor, lambda: f64) -> Result<Tensor> {
    let weighted = g.scale(cf, lambda);
    Ok(g.add(base, weighted)?)
}
