//! Experiment orchestration for the `protofair` binary: config parsing,
//! baseline/treatment runs over several seeds, and artifact output.

pub mod config;
pub mod metrics;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use protofair::checkpoint::Checkpoint;
use protofair::data::{generate, save_csv, Dataset, Split};
use protofair::diffcore::Matrix;
use protofair::eval::probe_and_score;
use protofair::trainer::{run, Variant};

pub use config::ExperimentConfig;
pub use metrics::{median, read_metrics, write_metrics, MetricsRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config JSON: {0}")]
    Syntax(serde_json::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config value for `{key}`: {message}")]
    Range { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("metrics file: {0}")]
    Metrics(String),
    #[error(transparent)]
    Run(#[from] protofair::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. }
            | CliError::Syntax(_)
            | CliError::UnknownKey(_)
            | CliError::Range { .. }
            | CliError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantSelection {
    Baseline,
    Protofair,
    Both,
}

impl VariantSelection {
    fn variants(self) -> &'static [Variant] {
        match self {
            VariantSelection::Baseline => &[Variant::Baseline],
            VariantSelection::Protofair => &[Variant::Protofair],
            VariantSelection::Both => &[Variant::Baseline, Variant::Protofair],
        }
    }
}

fn embeddings_csv(features: &Matrix, split: &Split, mut w: impl Write) -> std::io::Result<()> {
    let m = features.cols();
    let mut header: Vec<String> = (0..m).map(|j| format!("e{j}")).collect();
    header.push("y".into());
    header.push("s".into());
    write!(w, "{}\n", header.join(","))?;
    for (i, row) in features.iter_rows().enumerate() {
        let mut line = String::new();
        for v in row {
            write!(line, "{v:?},").expect("writing to a String");
        }
        write!(w, "{line}{},{}\n", split.y[i], split.s[i])?;
    }
    Ok(())
}

/// Trains every (seed, variant) pair, writing `metrics.csv` plus a
/// checkpoint and test-split embeddings per run under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, which: VariantSelection, log: &mut impl Write) -> Result<Vec<MetricsRow>, CliError> {
    cfg.validate()?;
    let data: Dataset = generate(&cfg.dataset_spec())?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out.join("runs"))?;

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for &variant in which.variants() {
            let mut train_cfg = cfg.train_config(seed);
            if variant == Variant::Baseline {
                train_cfg.schedule.lambda_fair = 0.0;
            }
            let result = run(&train_cfg, variant, &data)?;
            let dir = out.join("runs").join(format!("seed{seed}_{}", variant.name()));
            fs::create_dir_all(&dir)?;
            let bank = (variant == Variant::Protofair).then_some(&result.bank);
            Checkpoint::new(&result.model, bank).save(dir.join("checkpoint.json"))?;
            let mut w = BufWriter::new(fs::File::create(dir.join("embeddings.csv"))?);
            embeddings_csv(&result.test_features, &data.test, &mut w)?;
            w.flush()?;

            let f = &result.probe.fairness;
            let row = MetricsRow {
                seed,
                variant: variant.name().into(),
                epochs: cfg.total_epochs,
                warmup: cfg.warmup_epochs,
                k: cfg.num_clusters,
                lambda: train_cfg.schedule.lambda_fair,
                tau: cfg.tau,
                acc: result.probe.accuracy,
                eo: f.eo,
                tpr_gap: f.tpr_gap,
                fpr_gap: f.fpr_gap,
            };
            writeln!(log, "seed {seed:>3}  {:<10} acc {:>7.2}  eo {:>6.2}", row.variant, row.acc, row.eo)?;
            rows.push(row);
        }
    }

    let mut w = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
    write_metrics(&rows, &mut w)?;
    w.flush()?;
    write_summary(&rows, log)?;
    Ok(rows)
}

pub fn write_summary(rows: &[MetricsRow], log: &mut impl Write) -> std::io::Result<()> {
    writeln!(log)?;
    writeln!(log, "{:<10} {:>5} {:>10} {:>10}", "variant", "runs", "median acc", "median eo")?;
    for name in ["baseline", "protofair"] {
        let sel: Vec<&MetricsRow> = rows.iter().filter(|r| r.variant == name).collect();
        if sel.is_empty() {
            continue;
        }
        let acc: Vec<f64> = sel.iter().map(|r| r.acc).collect();
        let eo: Vec<f64> = sel.iter().map(|r| r.eo).collect();
        writeln!(
            log,
            "{:<10} {:>5} {:>10.2} {:>10.2}",
            name,
            sel.len(),
            median(&acc).unwrap_or(f64::NAN),
            median(&eo).unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}

/// Writes `train.csv`, `val.csv` and `test.csv` for the configured data.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let data = generate(&cfg.dataset_spec())?;
    fs::create_dir_all(out)?;
    save_csv(&data.train, out.join("train.csv"))?;
    save_csv(&data.val, out.join("val.csv"))?;
    save_csv(&data.test, out.join("test.csv"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub eo: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
}

/// Probes a saved encoder: fits on `train`, scores on `test`.
pub fn eval_checkpoint(checkpoint: &Path, train: &Split, test: &Split, epochs: usize, lr: f64) -> Result<EvalReport, CliError> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let r = probe_and_score(
        &model.features(&train.x)?,
        &train.y,
        &model.features(&test.x)?,
        &test.y,
        &test.s,
        epochs,
        lr,
    )?;
    Ok(EvalReport {
        accuracy: r.accuracy,
        eo: r.fairness.eo,
        tpr_gap: r.fairness.tpr_gap,
        fpr_gap: r.fairness.fpr_gap,
    })
}
