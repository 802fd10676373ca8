use protofair::diffcore::{log_sum_exp, Graph, Matrix};
use protofair::losses::{
    positive_sets, protofair_loss, queue_positive_sets, simclr_loss, supcon_loss,
};
use protofair::queue::QueueSnapshot;
use testkit::{
    brute_positive_sets, brute_queue_positive_sets, naive_cross_loss, naive_log_sum_exp,
    naive_simclr, naive_supcon, naive_within_loss, Rows, SplitMix,
};

const TAUS: [f64; 3] = [0.1, 0.5, 1.0];

struct Instance {
    z: Rows,
    cluster: Vec<usize>,
    sensitive: Vec<u8>,
    targets: Vec<u8>,
    queue_z: Rows,
    queue_cluster: Vec<usize>,
    queue_sensitive: Vec<u8>,
    tau: f64,
}

fn instance(rng: &mut SplitMix, case: usize) -> Instance {
    let b = 1 + rng.below(16);
    let n = 2 * b;
    let d = 2 + rng.below(15);
    let k = 1 + rng.below(5);
    let q = rng.below(40);
    Instance {
        z: rng.unit_rows(n, d),
        cluster: (0..n).map(|_| rng.below(k)).collect(),
        sensitive: (0..n).map(|_| rng.below(2) as u8).collect(),
        targets: (0..b).map(|_| rng.below(2) as u8).collect(),
        queue_z: rng.unit_rows(q, d),
        queue_cluster: (0..q).map(|_| rng.below(k)).collect(),
        queue_sensitive: (0..q).map(|_| rng.below(2) as u8).collect(),
        tau: TAUS[case % 3],
    }
}

fn snapshot(inst: &Instance) -> QueueSnapshot {
    let d = inst.z[0].len();
    QueueSnapshot {
        z: if inst.queue_z.is_empty() {
            Matrix::zeros(0, d)
        } else {
            Matrix::from_rows(&inst.queue_z)
        },
        cluster: inst.queue_cluster.clone(),
        sensitive: inst.queue_sensitive.clone(),
    }
}

#[test]
fn loss_values_match_per_pair_loops() {
    let mut rng = SplitMix(2024);
    for case in 0..500 {
        let inst = instance(&mut rng, case);
        let mut g = Graph::new();
        let z = g.constant(Matrix::from_rows(&inst.z));
        let queue = snapshot(&inst);
        let terms = protofair_loss(&mut g, z, &inst.cluster, &inst.sensitive, &queue, inst.tau).unwrap();
        let simclr = simclr_loss(&mut g, z, inst.tau).unwrap();
        let supcon = supcon_loss(&mut g, z, &inst.targets, inst.tau).unwrap();

        let within = naive_within_loss(&inst.z, &inst.cluster, &inst.sensitive, inst.tau);
        let cross = naive_cross_loss(
            &inst.z,
            &inst.cluster,
            &inst.sensitive,
            &inst.queue_z,
            &inst.queue_cluster,
            &inst.queue_sensitive,
            inst.tau,
        );
        let pairs = [
            ("within", g.value(terms.within).item(), within),
            ("cross", g.value(terms.cross).item(), cross),
            ("total", g.value(terms.total).item(), within + cross),
            ("simclr", g.value(simclr).item(), naive_simclr(&inst.z, inst.tau)),
            ("supcon", g.value(supcon).item(), naive_supcon(&inst.z, &inst.targets, inst.tau)),
        ];
        for (name, got, want) in pairs {
            assert!((got - want).abs() < 1e-10, "{name} case {case}: {got} vs {want}");
        }
    }
}

#[test]
fn positive_sets_match_brute_force() {
    let mut rng = SplitMix(99);
    for case in 0..1000 {
        let n = 1 + rng.below(64);
        let k = 1 + rng.below(10);
        let q = rng.below(80);
        let cluster: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let sensitive: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let queue = QueueSnapshot {
            z: Matrix::zeros(q, 2),
            cluster: (0..q).map(|_| rng.below(k)).collect(),
            sensitive: (0..q).map(|_| rng.below(2) as u8).collect(),
        };

        let p = positive_sets(&cluster, &sensitive).unwrap();
        assert_eq!(p.sets, brute_positive_sets(&cluster, &sensitive), "case {case}");
        let valid: Vec<usize> = (0..n).filter(|&i| !p.sets[i].is_empty()).collect();
        assert_eq!(p.valid, valid);

        let pq = queue_positive_sets(&cluster, &sensitive, &queue).unwrap();
        let want = brute_queue_positive_sets(&cluster, &sensitive, &queue.cluster, &queue.sensitive);
        assert_eq!(pq.sets, want, "case {case}");
    }
}

#[test]
fn log_sum_exp_matches_direct_sum() {
    let mut rng = SplitMix(3);
    for _ in 0..500 {
        let v: Vec<f64> = (0..1 + rng.below(20)).map(|_| rng.range(-30.0, 30.0)).collect();
        let got = log_sum_exp(&v).unwrap();
        let want = naive_log_sum_exp(&v);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}
