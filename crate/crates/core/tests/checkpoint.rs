use protofair::checkpoint::Checkpoint;
use protofair::data::{generate, DatasetSpec};
use protofair::trainer::{run, TrainConfig, Variant};

#[test]
fn file_round_trip_preserves_features_bitwise() {
    let d = generate(&DatasetSpec { n_samples: 300, ..Default::default() }).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.schedule.total_epochs = 2;
    cfg.sgd.total_epochs = 2;
    cfg.schedule.warmup_epochs = 1;
    cfg.schedule.batch_size = 32;
    cfg.num_clusters = 3;
    cfg.probe_epochs = 10;
    let out = run(&cfg, Variant::Protofair, &d).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let ck = Checkpoint::new(&out.model, Some(&out.bank));
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);

    let model = back.into_model().unwrap();
    let a = out.model.features(&d.test.x).unwrap();
    let b = model.features(&d.test.x).unwrap();
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn rejects_foreign_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"format": "other"}"#).unwrap();
    assert!(Checkpoint::load(&path).is_err());
    assert!(Checkpoint::load(dir.path().join("missing.json")).is_err());
}
