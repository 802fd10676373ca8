//! Reference implementations for the test suites.
//!
//! Everything here is written as plain nested loops over `Vec<Vec<f64>>`,
//! deliberately sharing no code with the library it checks.

pub type Rows = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Deterministic splitmix64 generator so oracles need no RNG crate.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn unit_rows(&mut self, n: usize, d: usize) -> Rows {
        (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| self.normal()).collect();
                let norm = dot(&v, &v).sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect()
    }
}

/// `k` well-separated clusters on the unit sphere: each point is a random
/// centre scaled by `kappa` plus standard normal noise, then normalized.
/// Returns the points and their generating labels.
pub fn sphere_blobs(rng: &mut SplitMix, n: usize, d: usize, k: usize, kappa: f64) -> (Rows, Vec<usize>) {
    let centres = rng.unit_rows(k, d);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let p: Vec<f64> = centres[c].iter().map(|v| kappa * v + rng.normal()).collect();
        points.push(p);
        labels.push(c);
    }
    (normalize_rows(&points), labels)
}

pub fn normalize_rows(rows: &Rows) -> Rows {
    rows.iter()
        .map(|r| {
            let n = dot(r, r).sqrt();
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

/// `ln Σ exp(v)` by direct summation.
pub fn naive_log_sum_exp(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x.exp();
    }
    s.ln()
}

/// Brute-force pseudo-counterfactual sets within a batch.
pub fn brute_positive_sets(cluster: &[usize], sensitive: &[u8]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..cluster.len() {
        let mut p = Vec::new();
        for j in 0..cluster.len() {
            if i != j && cluster[i] == cluster[j] && sensitive[i] != sensitive[j] {
                p.push(j);
            }
        }
        out.push(p);
    }
    out
}

/// Brute-force partners of each batch sample inside a queue.
pub fn brute_queue_positive_sets(
    cluster: &[usize],
    sensitive: &[u8],
    queue_cluster: &[usize],
    queue_sensitive: &[u8],
) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..cluster.len() {
        let mut p = Vec::new();
        for j in 0..queue_cluster.len() {
            if queue_cluster[j] == cluster[i] && queue_sensitive[j] != sensitive[i] {
                p.push(j);
            }
        }
        out.push(p);
    }
    out
}

/// Mean over anchors with positives of the mean over positives of
/// `-log(exp(s_ij) / Σ_{k in denom(i)} exp(s_ik))`, each term evaluated
/// as a separate scalar expression.
fn per_pair_loss(
    anchors: &Rows,
    candidates: &Rows,
    positives: &[Vec<usize>],
    in_denominator: impl Fn(usize, usize) -> bool,
    tau: f64,
) -> f64 {
    let mut total = 0.0;
    let mut valid = 0usize;
    for i in 0..anchors.len() {
        if positives[i].is_empty() {
            continue;
        }
        valid += 1;
        let mut denom = 0.0;
        for k in 0..candidates.len() {
            if in_denominator(i, k) {
                denom += (dot(&anchors[i], &candidates[k]) / tau).exp();
            }
        }
        let mut anchor_sum = 0.0;
        for &j in &positives[i] {
            let num = (dot(&anchors[i], &candidates[j]) / tau).exp();
            anchor_sum += -(num / denom).ln();
        }
        total += anchor_sum / positives[i].len() as f64;
    }
    if valid == 0 {
        0.0
    } else {
        total / valid as f64
    }
}

pub fn naive_within_loss(z: &Rows, cluster: &[usize], sensitive: &[u8], tau: f64) -> f64 {
    let p = brute_positive_sets(cluster, sensitive);
    per_pair_loss(z, z, &p, |i, k| i != k, tau)
}

pub fn naive_cross_loss(
    z: &Rows,
    cluster: &[usize],
    sensitive: &[u8],
    queue_z: &Rows,
    queue_cluster: &[usize],
    queue_sensitive: &[u8],
    tau: f64,
) -> f64 {
    if queue_z.is_empty() {
        return 0.0;
    }
    let p = brute_queue_positive_sets(cluster, sensitive, queue_cluster, queue_sensitive);
    per_pair_loss(z, queue_z, &p, |_, _| true, tau)
}

/// NT-Xent with rows `[0, B)` and `[B, 2B)` as the two views.
pub fn naive_simclr(z: &Rows, tau: f64) -> f64 {
    let n = z.len();
    let b = n / 2;
    let mut total = 0.0;
    for i in 0..n {
        let partner = if i < b { i + b } else { i - b };
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (dot(&z[i], &z[k]) / tau).exp();
            }
        }
        total += -((dot(&z[i], &z[partner]) / tau).exp() / denom).ln();
    }
    total / n as f64
}

/// SupCon (positives averaged outside the log), one label per sample.
pub fn naive_supcon(z: &Rows, targets: &[u8], tau: f64) -> f64 {
    let n = z.len();
    let b = n / 2;
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (dot(&z[i], &z[k]) / tau).exp();
            }
        }
        let mut sum = 0.0;
        let mut count = 0;
        for j in 0..n {
            if j != i && targets[j % b] == targets[i % b] {
                sum += -((dot(&z[i], &z[j]) / tau).exp() / denom).ln();
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            anchors += 1;
        }
    }
    if anchors == 0 {
        0.0
    } else {
        total / anchors as f64
    }
}

/// Central difference gradient of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Fourth-order central difference (five-point stencil).
pub fn central_diff5(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        let mut at = |k: f64| {
            probe[i] = orig + k * step;
            f(&probe)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        probe[i] = orig;
        grad.push((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step));
    }
    grad
}

/// Worst elementwise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs()).max(floor);
        worst = worst.max((a - n).abs() / scale);
    }
    worst
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for i in 0..n {
        table[a[i]][b[i]] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut sum_ij = 0.0;
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for i in 0..ka {
        for j in 0..kb {
            sum_ij += c2(table[i][j]);
            rows[i] += table[i][j];
            cols[j] += table[i][j];
        }
    }
    let sum_a: f64 = rows.iter().map(|&x| c2(x)).sum();
    let sum_b: f64 = cols.iter().map(|&x| c2(x)).sum();
    let expected = sum_a * sum_b / c2(n as u64);
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// Plain-list model of a bounded FIFO.
#[derive(Default)]
pub struct ListFifo<T> {
    pub items: Vec<T>,
    pub capacity: usize,
}

impl<T: Clone> ListFifo<T> {
    pub fn new(capacity: usize) -> Self {
        Self { items: Vec::new(), capacity }
    }

    pub fn push_all(&mut self, batch: &[T]) {
        self.items.extend_from_slice(batch);
        if self.items.len() > self.capacity {
            let drop = self.items.len() - self.capacity;
            self.items.drain(..drop);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_of_identical_and_permuted_labels_is_one() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [2, 2, 0, 0, 1, 1];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_known_value() {
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 0.5714285714285715).abs() < 1e-12);
    }

    #[test]
    fn fifo_model() {
        let mut f = ListFifo::new(3);
        f.push_all(&[1, 2]);
        f.push_all(&[3, 4]);
        assert_eq!(f.items, vec![2, 3, 4]);
    }
}
