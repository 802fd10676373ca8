//! Linear-probe evaluation on frozen features: accuracy and equalized odds.

use serde::{Deserialize, Serialize};

use crate::diffcore::{dot, Matrix};
use crate::{Error, Result};

pub const DEFAULT_PROBE_EPOCHS: usize = 200;
pub const DEFAULT_PROBE_LR: f64 = 0.1;

/// Logistic-regression classifier over standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-feature mean and scale fitted on the probe's training set.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LinearProbe {
    fn standardized(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        dot(&self.weights, &self.standardized(row)) + self.bias
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<u8>> {
        if features.cols() != self.weights.len() {
            return Err(Error::Contract(format!(
                "probe expects {} features, got {}",
                self.weights.len(),
                features.cols()
            )));
        }
        Ok(features.iter_rows().map(|r| u8::from(self.logit(r) > 0.0)).collect())
    }
}

/// Full-batch gradient descent on the mean binary cross-entropy, starting
/// from zero weights.
pub fn train_linear_probe(features: &Matrix, targets: &[u8], epochs: usize, lr: f64) -> Result<LinearProbe> {
    let (n, d) = features.shape();
    if n != targets.len() {
        return Err(Error::Contract(format!("{n} feature rows for {} targets", targets.len())));
    }
    if !features.is_finite() {
        return Err(Error::Contract("probe features must be finite".into()));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::Contract("probe targets must be binary".into()));
    }
    let positives = targets.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateTask("probe targets contain a single class".into()));
    }

    let mut mean = vec![0.0; d];
    for r in features.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for r in features.iter_rows() {
        for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    // constant features keep unit scale and end up as all-zero inputs
    let scale: Vec<f64> = scale.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();

    let mut probe = LinearProbe {
        weights: vec![0.0; d],
        bias: 0.0,
        feature_mean: mean,
        feature_scale: scale,
    };
    let xs: Vec<Vec<f64>> = features.iter_rows().map(|r| probe.standardized(r)).collect();
    for _ in 0..epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &t) in xs.iter().zip(targets) {
            let err = sigmoid(dot(&probe.weights, x) + probe.bias) - t as f64;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += err * v;
            }
            gb += err;
        }
        for (w, g) in probe.weights.iter_mut().zip(&gw) {
            *w -= lr * g / n as f64;
        }
        probe.bias -= lr * gb / n as f64;
    }
    Ok(probe)
}

fn check_binary_lengths(pred: &[u8], targets: &[u8]) -> Result<()> {
    if pred.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            pred.len(),
            targets.len()
        )));
    }
    if pred.iter().chain(targets).any(|&v| v > 1) {
        return Err(Error::Contract("labels must be binary".into()));
    }
    Ok(())
}

/// Percentage of correct predictions.
pub fn accuracy(pred: &[u8], targets: &[u8]) -> Result<f64> {
    check_binary_lengths(pred, targets)?;
    if pred.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let correct = pred.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn tpr(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    fn fpr(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }
}

/// Equalized-odds gap in percentage points together with its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualizedOdds {
    /// `max(tpr_gap, fpr_gap)`
    pub eo: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
    /// Indexed by sensitive group.
    pub confusion: [Confusion; 2],
}

/// `100 · max_y |P(ŷ=1 | y, s=0) − P(ŷ=1 | y, s=1)|`.
pub fn equalized_odds(pred: &[u8], targets: &[u8], sensitive: &[u8]) -> Result<EqualizedOdds> {
    check_binary_lengths(pred, targets)?;
    check_binary_lengths(pred, sensitive)?;
    let mut confusion = [Confusion::default(); 2];
    for ((&p, &t), &s) in pred.iter().zip(targets).zip(sensitive) {
        let c = &mut confusion[s as usize];
        match (t, p) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fn_ += 1,
            (_, 1) => c.fp += 1,
            _ => c.tn += 1,
        }
    }
    let rate = |s: usize, y: u8| {
        let r = if y == 1 { confusion[s].tpr() } else { confusion[s].fpr() };
        r.ok_or(Error::EmptyCell { y, s: s as u8 })
    };
    let tpr_gap = 100.0 * (rate(0, 1)? - rate(1, 1)?).abs();
    let fpr_gap = 100.0 * (rate(0, 0)? - rate(1, 0)?).abs();
    Ok(EqualizedOdds {
        eo: tpr_gap.max(fpr_gap),
        tpr_gap,
        fpr_gap,
        confusion,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe: LinearProbe,
    pub accuracy: f64,
    pub fairness: EqualizedOdds,
}

impl ProbeResult {
    pub fn eo(&self) -> f64 {
        self.fairness.eo
    }
}

/// Trains a probe on one split and scores it on another.
pub fn probe_and_score(
    train_features: &Matrix,
    train_targets: &[u8],
    test_features: &Matrix,
    test_targets: &[u8],
    test_sensitive: &[u8],
    epochs: usize,
    lr: f64,
) -> Result<ProbeResult> {
    let probe = train_linear_probe(train_features, train_targets, epochs, lr)?;
    let pred = probe.predict(test_features)?;
    Ok(ProbeResult {
        accuracy: accuracy(&pred, test_targets)?,
        fairness: equalized_odds(&pred, test_targets, test_sensitive)?,
        probe,
    })
}
