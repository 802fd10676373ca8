//! Non-learnable unit-norm prototypes in the cluster-head space.
//!
//! Lifecycle: spherical K-Means over the whole training set once warmup
//! ends, hard nearest-prototype assignment every batch, an EMA nudge toward
//! each cluster's batch mean, and a wholesale K-Means refresh every
//! `reinit_period` epochs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{dot, Matrix, NORM_EPS};
use crate::{Error, Result};

/// Tolerance used when checking that incoming rows are unit-norm.
pub const UNIT_TOL: f64 = 1e-8;

pub const DEFAULT_MAX_ITERS: usize = 100;

pub(crate) fn check_unit_rows(m: &Matrix, what: &str) -> Result<()> {
    for (i, r) in m.iter_rows().enumerate() {
        let n = dot(r, r).sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Contract(format!("{what} row {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}

/// Index of the row of `centroids` with the largest dot product with `x`.
/// Ties go to the lowest index.
pub fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (k, c) in centroids.iter_rows().enumerate() {
        let s = dot(x, c);
        if s > best_sim {
            best = k;
            best_sim = s;
        }
    }
    (best, best_sim)
}

/// One EMA step on a single prototype: `normalize(m·c + (1-m)·mean)`.
/// Leaves `proto` untouched if the blend has (numerically) zero norm.
pub fn ema_step(proto: &mut [f64], batch_mean: &[f64], momentum: f64) {
    let blended: Vec<f64> = proto
        .iter()
        .zip(batch_mean)
        .map(|(c, h)| momentum * c + (1.0 - momentum) * h)
        .collect();
    let n = dot(&blended, &blended).sqrt();
    if n < NORM_EPS {
        return;
    }
    for (p, b) in proto.iter_mut().zip(blended) {
        *p = b / n;
    }
}

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Σᵢ maxₖ xᵢ·cₖ after seeding and after every centroid update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn assign_all(features: &Matrix, centroids: &Matrix) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let a = features
        .iter_rows()
        .map(|x| {
            let (k, s) = nearest(centroids, x);
            total += s;
            k
        })
        .collect();
    (a, total)
}

fn kmeans_pp_seed(features: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = features.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    // squared chord distance on the sphere: |x - c|² = 2 - 2 x·c
    let mut d2: Vec<f64> = features
        .iter_rows()
        .map(|x| (2.0 - 2.0 * dot(x, features.row(chosen[0]))).max(0.0))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // fewer distinct points than k: any unused index will do
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        let c = features.row(next);
        for (i, x) in features.iter_rows().enumerate() {
            d2[i] = d2[i].min((2.0 - 2.0 * dot(x, c)).max(0.0));
        }
    }
    features.select_rows(&chosen)
}

/// Spherical K-Means: k-means++ seeding, then alternate max-cosine
/// assignment and normalized-mean centroids until the assignment stops
/// changing or `max_iters` updates have run.
pub fn spherical_kmeans(features: &Matrix, k: usize, max_iters: usize, rng: &mut impl Rng) -> Result<KMeans> {
    let (n, d) = features.shape();
    if k == 0 || n < k {
        return Err(Error::Config(format!("K-Means needs at least K={k} points, got {n}")));
    }
    check_unit_rows(features, "K-Means feature")?;

    let mut centroids = kmeans_pp_seed(features, k, rng);
    let (mut assignments, obj) = assign_all(features, &centroids);
    let mut objective_trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (x, &a) in features.iter_rows().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let s = sums.row(c);
            let nrm = dot(s, s).sqrt();
            if nrm >= NORM_EPS {
                let row: Vec<f64> = s.iter().map(|v| v / nrm).collect();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let (far, _) = features
                .iter_rows()
                .enumerate()
                .map(|(i, x)| (i, nearest(&centroids, x).1))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            let row = features.row(far).to_vec();
            centroids.row_mut(c).copy_from_slice(&row);
        }

        let (next, obj) = assign_all(features, &centroids);
        objective_trace.push(obj);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }

    Ok(KMeans {
        centroids,
        assignments,
        objective_trace,
        iterations,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    k: usize,
    dim: usize,
    momentum: f64,
    reinit_period: usize,
    max_iters: usize,
    last_init_epoch: usize,
    protos: Option<Matrix>,
}

impl PrototypeBank {
    pub fn new(k: usize, dim: usize, momentum: f64, reinit_period: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 prototypes, got {k}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("prototype momentum must lie in [0, 1), got {momentum}")));
        }
        if reinit_period == 0 || dim == 0 {
            return Err(Error::Config("reinit period and dimension must be >= 1".into()));
        }
        Ok(Self {
            k,
            dim,
            momentum,
            reinit_period,
            max_iters: DEFAULT_MAX_ITERS,
            last_init_epoch: 0,
            protos: None,
        })
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters.max(1);
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn reinit_period(&self) -> usize {
        self.reinit_period
    }

    pub fn last_init_epoch(&self) -> usize {
        self.last_init_epoch
    }

    pub fn is_initialized(&self) -> bool {
        self.protos.is_some()
    }

    pub fn prototypes(&self) -> Result<&Matrix> {
        self.protos.as_ref().ok_or(Error::Uninitialized)
    }

    /// Replaces every prototype with fresh spherical K-Means centroids.
    pub fn kmeans_init(&mut self, features: &Matrix, epoch: usize, rng: &mut impl Rng) -> Result<KMeans> {
        if features.cols() != self.dim {
            return Err(Error::Contract(format!(
                "features have dimension {}, bank expects {}",
                features.cols(),
                self.dim
            )));
        }
        let km = spherical_kmeans(features, self.k, self.max_iters, rng)?;
        self.protos = Some(km.centroids.clone());
        self.last_init_epoch = epoch;
        Ok(km)
    }

    /// Hard assignment to the most similar prototype.
    pub fn assign(&self, hbar: &Matrix) -> Result<Vec<usize>> {
        let protos = self.prototypes()?;
        if hbar.cols() != self.dim {
            return Err(Error::Contract(format!(
                "embeddings have dimension {}, bank expects {}",
                hbar.cols(),
                self.dim
            )));
        }
        Ok(hbar.iter_rows().map(|x| nearest(protos, x).0).collect())
    }

    /// Moves each prototype that received samples toward their mean.
    /// Prototypes with no samples in this batch are left as they are.
    pub fn ema_update(&mut self, hbar: &Matrix, assignments: &[usize]) -> Result<()> {
        let (k, dim, momentum) = (self.k, self.dim, self.momentum);
        let protos = self.protos.as_mut().ok_or(Error::Uninitialized)?;
        if hbar.rows() != assignments.len() || hbar.cols() != dim {
            return Err(Error::Contract(format!(
                "EMA got {}x{} embeddings for {} assignments",
                hbar.rows(),
                hbar.cols(),
                assignments.len()
            )));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::Contract(format!("cluster id {bad} out of range for K={k}")));
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (x, &a) in hbar.iter_rows().zip(assignments) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums.row(c).iter().map(|s| s / counts[c] as f64).collect();
            ema_step(protos.row_mut(c), &mean, momentum);
        }
        Ok(())
    }

    pub fn reinit_due(&self, epoch: usize) -> Result<bool> {
        if !self.is_initialized() {
            return Err(Error::Uninitialized);
        }
        Ok(epoch.saturating_sub(self.last_init_epoch) >= self.reinit_period)
    }
}
