//! Synthetic biased vector data, two-view augmentation and CSV ingestion.
//!
//! Samples are drawn as `x = μ_y + β·ν_s + ε`. The two class means lie on
//! orthogonal axes at distance `content_sep` from each other, `ν_1 = -ν_0`
//! is a third axis, and `ε ~ N(0, σ²I)`. In the training split the
//! sensitive attribute agrees with the target with probability `ρ`; the
//! validation and test splits are balanced (`ρ = 0.5`).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Matrix;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_samples: usize,
    pub input_dim: usize,
    pub n_content_classes: usize,
    pub content_sep: f64,
    pub bias_strength: f64,
    /// P(s = y) in the training split.
    pub group_corr: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            input_dim: 16,
            n_content_classes: 2,
            content_sep: 3.0,
            bias_strength: 1.5,
            group_corr: 0.8,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 3 {
            return Err(Error::Config(format!(
                "input_dim must be at least 3 to hold two class axes and a group axis, got {}",
                self.input_dim
            )));
        }
        if self.n_content_classes != 2 {
            return Err(Error::Config("only binary targets are supported (n_content_classes = 2)".into()));
        }
        if !(0.5..=1.0).contains(&self.group_corr) {
            return Err(Error::Config(format!("group_corr must lie in [0.5, 1], got {}", self.group_corr)));
        }
        if !(self.bias_strength >= 0.0 && self.bias_strength.is_finite()) {
            return Err(Error::Config("bias_strength must be >= 0".into()));
        }
        if !(self.content_sep > 0.0 && self.content_sep.is_finite()) {
            return Err(Error::Config("content_sep must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if self.n_samples < 20 {
            return Err(Error::Config("n_samples must be at least 20".into()));
        }
        Ok(())
    }

    /// Noise-free centre of the (y, s) cell.
    pub fn cell_mean(&self, y: u8, s: u8) -> Vec<f64> {
        let mut m = vec![0.0; self.input_dim];
        m[y as usize] = self.content_sep / std::f64::consts::SQRT_2;
        m[2] = if s == 1 { self.bias_strength } else { -self.bias_strength };
        m
    }
}

/// A set of labelled samples stored column-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            x: self.x.row(i).to_vec(),
            y: self.y[i],
            s: self.s[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: u8,
    pub s: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

fn draw_split(spec: &DatasetSpec, n: usize, rho: f64, rng: &mut impl Rng) -> Split {
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut data = Vec::with_capacity(n * spec.input_dim);
    let mut ys = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.random::<f64>() < 0.5);
        let s = if rng.random::<f64>() < rho { y } else { 1 - y };
        for m in spec.cell_mean(y, s) {
            data.push(m + noise.sample(rng));
        }
        ys.push(y);
        ss.push(s);
    }
    Split {
        x: Matrix::from_vec(n, spec.input_dim, data),
        y: ys,
        s: ss,
    }
}

/// Draws the 70/15/15 train/val/test splits.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Data);
    let n_train = spec.n_samples * 70 / 100;
    let n_val = spec.n_samples * 15 / 100;
    let n_test = spec.n_samples - n_train - n_val;
    let train = draw_split(spec, n_train, spec.group_corr, &mut rng);
    let val = draw_split(spec, n_val, 0.5, &mut rng);
    let test = draw_split(spec, n_test, 0.5, &mut rng);
    Ok(Dataset { train, val, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub sigma: f64,
    pub drop_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            drop_rate: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("aug_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::Config("aug_drop must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn one_view(x: &Matrix, cfg: &AugmentConfig, rng: &mut impl Rng) -> Matrix {
    let noise = Normal::new(0.0, cfg.sigma).expect("validated sigma");
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        let jitter = noise.sample(rng);
        let dropped = rng.random::<f64>() < cfg.drop_rate;
        *v = if dropped { 0.0 } else { *v + jitter };
    }
    out
}

/// Two independently jittered and dropped-out copies of `x`.
pub fn augment(x: &Matrix, cfg: &AugmentConfig, rng: &mut impl Rng) -> (Matrix, Matrix) {
    let a = one_view(x, cfg, rng);
    let b = one_view(x, cfg, rng);
    (a, b)
}

fn parse_binary(field: &str, name: &str, line: usize) -> Result<u8> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} value {field:?} is not a number"),
    })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Validation {
            line,
            message: format!("{name}={field} is not binary"),
        })
    }
}

/// Reads `x0,...,x{D-1},y,s` rows with a header line.
pub fn read_csv(reader: impl Read) -> Result<Split> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(2);
    let expected: Vec<String> = (0..d).map(|i| format!("x{i}")).chain(["y".into(), "s".into()]).collect();
    if d == 0 || cols != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be x0,...,x{{D-1}},y,s, got {header:?}"),
        });
    }
    let mut data = Vec::new();
    let (mut ys, mut ss) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", d + 2, fields.len()),
            });
        }
        for f in &fields[..d] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("{f:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation {
                    line: lineno,
                    message: format!("non-finite feature {f}"),
                });
            }
            data.push(v);
        }
        ys.push(parse_binary(fields[d], "y", lineno)?);
        ss.push(parse_binary(fields[d + 1], "s", lineno)?);
    }
    Ok(Split {
        x: Matrix::from_vec(ys.len(), d, data),
        y: ys,
        s: ss,
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Split> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv(split: &Split, mut w: impl Write) -> Result<()> {
    let d = split.input_dim();
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).chain(["y".into(), "s".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..split.len() {
        let mut line = String::new();
        for v in split.x.row(i) {
            // shortest representation that parses back to the same f64
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(&format!("{},{}", split.y[i], split.s[i]));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_csv(split: &Split, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(split, &mut f)?;
    f.flush()?;
    Ok(())
}
