use proptest::prelude::*;
use protofair::diffcore::{dot, log_sum_exp, Graph, Matrix};
use protofair::eval::{accuracy, equalized_odds};
use protofair::losses::protofair_loss;
use protofair::prototypes::{spherical_kmeans, PrototypeBank};
use protofair::queue::{FeatureQueue, QueueSnapshot};
use protofair::rng::{stream, Stream};
use testkit::{ListFifo, SplitMix};

fn unit_rows(seed: u64, n: usize, d: usize) -> Matrix {
    Matrix::from_rows(&SplitMix(seed).unit_rows(n, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lse_is_shift_equivariant(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = log_sum_exp(&shifted).unwrap();
        let b = log_sum_exp(&v).unwrap() + c;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn lse_bounds(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&v).unwrap();
        prop_assert!(l >= m - 1e-12);
        prop_assert!(l <= m + (v.len() as f64).ln() + 1e-12);
    }

    /// The gradient of row normalization is orthogonal to the output row.
    #[test]
    fn normalize_gradient_is_tangent(seed in any::<u64>(), n in 1usize..6, d in 2usize..8) {
        let mut rng = SplitMix(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.range(-2.0, 2.0)).collect());
        let w = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.range(-1.0, 1.0)).collect());
        let mut g = Graph::new();
        let xt = g.param(x.clone());
        let y = g.l2_normalize_rows(xt).unwrap();
        let loss = g.weighted_sum(y, w).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(xt).unwrap();
        for i in 0..n {
            let scale = dot(grad.row(i), grad.row(i)).sqrt().max(1.0);
            prop_assert!(dot(grad.row(i), g.value(y).row(i)).abs() < 1e-12 * scale);
        }
    }

    /// Detach is the identity on values and stops gradients completely.
    #[test]
    fn detach_is_identity_without_gradient(seed in any::<u64>(), n in 1usize..5, d in 1usize..5) {
        let mut rng = SplitMix(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.range(-2.0, 2.0)).collect());
        let mut g = Graph::new();
        let xt = g.param(x.clone());
        let dt = g.detach(xt);
        prop_assert_eq!(g.value(dt), &x);
        let prod = g.matmul_nt(dt, dt).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        prop_assert!(g.grad(xt).map_or(true, |m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    /// Hard assignment ignores row order and positive row scaling.
    #[test]
    fn assignment_is_equivariant(seed in any::<u64>(), k in 2usize..6, n in 1usize..30, c in 0.1f64..10.0) {
        let mut bank = PrototypeBank::new(k, 4, 0.9, 5).unwrap();
        let feats = unit_rows(seed, 40, 4);
        bank.kmeans_init(&feats, 0, &mut stream(seed, Stream::KMeans)).unwrap();
        let x = unit_rows(seed ^ 1, n, 4);
        let a = bank.assign(&x).unwrap();
        let perm: Vec<usize> = (0..n).rev().collect();
        let ap = bank.assign(&x.select_rows(&perm)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(ap[i], a[p]);
        }
        let scaled = x.map(|v| v * c);
        prop_assert_eq!(bank.assign(&scaled).unwrap(), a);
    }

    #[test]
    fn kmeans_is_deterministic_and_monotone(seed in any::<u64>(), k in 1usize..8) {
        let x = unit_rows(seed, 60, 5);
        let a = spherical_kmeans(&x, k, 100, &mut stream(seed, Stream::KMeans)).unwrap();
        let b = spherical_kmeans(&x, k, 100, &mut stream(seed, Stream::KMeans)).unwrap();
        prop_assert_eq!(&a.centroids, &b.centroids);
        prop_assert_eq!(&a.assignments, &b.assignments);
        for w in a.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "objective fell: {:?}", a.objective_trace);
        }
        for r in a.centroids.iter_rows() {
            prop_assert!((dot(r, r).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_keeps_prototypes_on_the_sphere(seed in any::<u64>(), steps in 1usize..20, m in 0.0f64..0.999) {
        let mut bank = PrototypeBank::new(3, 4, m, 5).unwrap();
        bank.kmeans_init(&unit_rows(seed, 30, 4), 0, &mut stream(seed, Stream::KMeans)).unwrap();
        for s in 0..steps {
            let x = unit_rows(seed.wrapping_add(s as u64 + 1), 8, 4);
            let a = bank.assign(&x).unwrap();
            bank.ema_update(&x, &a).unwrap();
            for r in bank.prototypes().unwrap().iter_rows() {
                prop_assert!((dot(r, r).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    /// Relabelling rows together with their annotations leaves the loss
    /// unchanged, and the loss is never negative.
    #[test]
    fn fairness_loss_is_permutation_invariant(seed in any::<u64>(), n in 2usize..20, q in 0usize..20) {
        let mut rng = SplitMix(seed);
        let z = Matrix::from_rows(&rng.unit_rows(n, 4));
        let cluster: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let sensitive: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let queue = QueueSnapshot {
            z: if q == 0 { Matrix::zeros(0, 4) } else { Matrix::from_rows(&rng.unit_rows(q, 4)) },
            cluster: (0..q).map(|_| rng.below(3)).collect(),
            sensitive: (0..q).map(|_| rng.below(2) as u8).collect(),
        };
        let loss = |z: &Matrix, c: &[usize], s: &[u8]| {
            let mut g = Graph::new();
            let zt = g.constant(z.clone());
            let t = protofair_loss(&mut g, zt, c, s, &queue, 0.2).unwrap();
            g.value(t.total).item()
        };
        let base = loss(&z, &cluster, &sensitive);
        prop_assert!(base >= -1e-12);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let pc: Vec<usize> = perm.iter().map(|&i| cluster[i]).collect();
        let ps: Vec<u8> = perm.iter().map(|&i| sensitive[i]).collect();
        let permuted = loss(&z.select_rows(&perm), &pc, &ps);
        prop_assert!((base - permuted).abs() < 1e-12 * base.abs().max(1.0));
    }

    /// Accuracy and EO ignore sample order; EO ignores which group is
    /// called zero; accuracy plus error rate is 100.
    #[test]
    fn metric_invariances(seed in any::<u64>(), n in 8usize..80) {
        let mut rng = SplitMix(seed);
        // every (y, s) cell gets at least one sample
        let mut y: Vec<u8> = vec![0, 0, 1, 1];
        let mut s: Vec<u8> = vec![0, 1, 0, 1];
        for _ in 4..n {
            y.push(rng.below(2) as u8);
            s.push(rng.below(2) as u8);
        }
        let p: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let base = equalized_odds(&p, &y, &s).unwrap();
        let flipped: Vec<u8> = s.iter().map(|v| 1 - v).collect();
        prop_assert_eq!(equalized_odds(&p, &y, &flipped).unwrap().eo, base.eo);
        let perm: Vec<usize> = (0..n).rev().collect();
        let pick = |v: &[u8]| perm.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        prop_assert_eq!(equalized_odds(&pick(&p), &pick(&y), &pick(&s)).unwrap().eo, base.eo);
        let acc = accuracy(&p, &y).unwrap();
        let wrong = p.iter().zip(&y).filter(|(a, b)| a != b).count();
        prop_assert!((acc + 100.0 * wrong as f64 / n as f64 - 100.0).abs() < 1e-9);
    }

    /// Predictions that depend only on y give zero EO when every sample is
    /// duplicated into both groups.
    #[test]
    fn group_independent_predictions_have_zero_eo(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = SplitMix(seed);
        let mut y: Vec<u8> = vec![0, 1];
        y.extend((2..n).map(|_| rng.below(2) as u8));
        let p: Vec<u8> = y.iter().map(|_| rng.below(2) as u8).collect();
        let yy: Vec<u8> = y.iter().chain(&y).copied().collect();
        let pp: Vec<u8> = p.iter().chain(&p).copied().collect();
        let ss: Vec<u8> = std::iter::repeat(0).take(n).chain(std::iter::repeat(1).take(n)).collect();
        prop_assert_eq!(equalized_odds(&pp, &yy, &ss).unwrap().eo, 0.0);
    }
}

/// Random enqueue sequences against a plain list with the same capacity.
#[test]
fn queue_matches_list_model() {
    let mut rng = SplitMix(77);
    for seq in 0..10_000 {
        let capacity = 1 + rng.below(12);
        let mut queue = FeatureQueue::new(2, capacity);
        let mut model = ListFifo::new(capacity);
        let mut next = 0.0;
        for _ in 0..1 + rng.below(8) {
            let b = 1 + rng.below(6);
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            for _ in 0..b {
                next += 1.0;
                let c = rng.below(4);
                let s = rng.below(2) as u8;
                rows.push([next, -next]);
                entries.push((next, c, s));
            }
            let cluster: Vec<usize> = entries.iter().map(|e| e.1).collect();
            let sensitive: Vec<u8> = entries.iter().map(|e| e.2).collect();
            queue.enqueue_batch(&Matrix::from_rows(&rows), &cluster, &sensitive).unwrap();
            model.push_all(&entries);

            let got: Vec<(f64, usize, u8)> = queue.entries().map(|e| (e.z[0], e.cluster, e.sensitive)).collect();
            assert_eq!(got, model.items, "sequence {seq}");
            let snap = queue.snapshot();
            assert_eq!(snap.len(), model.items.len());
            assert!(snap.len() <= capacity);
        }
    }
}
