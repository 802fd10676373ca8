//! Shared encoder with a contrastive head and a cluster head.
//!
//! All three networks are plain MLPs: relu on hidden layers, identity on
//! the output layer. Both heads read the same encoder output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Matrix, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// fan_in × fan_out
    pub weight: Matrix,
    /// 1 × fan_out
    pub bias: Matrix,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
        Self {
            weight: Matrix::from_vec(fan_in, fan_out, data),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Linear>", into = "Vec<Linear>")]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl TryFrom<Vec<Linear>> for Mlp {
    type Error = Error;

    fn try_from(layers: Vec<Linear>) -> Result<Self> {
        Mlp::from_layers(layers)
    }
}

impl From<Mlp> for Vec<Linear> {
    fn from(m: Mlp) -> Self {
        m.layers
    }
}

impl Mlp {
    /// `widths = [in, hidden.., out]`
    pub fn new(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid MLP widths {widths:?}")));
        }
        let layers = widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in() == 0 || l.fan_out() == 0 || l.bias.shape() != (1, l.fan_out()) {
                return Err(Error::Config(format!("layer {i} has inconsistent shapes")));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::Config(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    w[0].fan_out(),
                    i + 1,
                    w[1].fan_in()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Parameters in a fixed order: weight then bias, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Registers the parameters as graph leaves.
    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (g.leaf(l.weight.clone(), requires_grad), g.leaf(l.bias.clone(), requires_grad)))
            .collect();
        MlpVars { layers }
    }

    /// Forward pass on plain values, without recording a graph.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xt = g.constant(x.clone());
        let out = vars.forward(&mut g, xt)?;
        Ok(g.value(out).clone())
    }
}

/// Graph handles of an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Tensor, Tensor)>,
}

impl MlpVars {
    pub fn forward(&self, g: &mut Graph, x: Tensor) -> Result<Tensor> {
        let in_dim = g.shape(self.layers[0].0).0;
        if g.shape(x).1 != in_dim {
            return Err(Error::Contract(format!(
                "input has {} features, network expects {in_dim}",
                g.shape(x).1
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let lin = g.matmul(h, w)?;
            h = g.add_row_bias(lin, b)?;
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Same order as [`Mlp::params`].
    pub fn tensors(&self) -> impl Iterator<Item = Tensor> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// Gradients in parameter order; zeros where backward never arrived.
    pub fn grads(&self, g: &Graph) -> Vec<Matrix> {
        self.tensors()
            .map(|t| {
                g.grad(t)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(g.shape(t).0, g.shape(t).1))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub encoder_out_dim: usize,
    pub head_hidden: usize,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            encoder_hidden: vec![64],
            encoder_out_dim: 32,
            head_hidden: 32,
            embed_dim: 16,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("input_dim", self.input_dim),
            ("encoder_out_dim", self.encoder_out_dim),
            ("head_hidden", self.head_hidden),
            ("embed_dim", self.embed_dim),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.encoder_hidden.contains(&0) {
            return Err(Error::Config("encoder_hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.encoder_hidden);
        w.push(self.encoder_out_dim);
        w
    }

    fn head_widths(&self) -> [usize; 3] {
        [self.encoder_out_dim, self.head_hidden, self.embed_dim]
    }
}

/// Encoder f, contrastive head g and cluster head h.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub encoder: Mlp,
    pub contrastive_head: Mlp,
    pub cluster_head: Mlp,
}

impl Model {
    pub fn init(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let encoder = Mlp::new(&config.encoder_widths(), rng)?;
        let contrastive_head = Mlp::new(&config.head_widths(), rng)?;
        let cluster_head = Mlp::new(&config.head_widths(), rng)?;
        Ok(Self {
            config,
            encoder,
            contrastive_head,
            cluster_head,
        })
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> ModelVars {
        ModelVars {
            encoder: self.encoder.bind(g, requires_grad),
            contrastive_head: self.contrastive_head.bind(g, requires_grad),
            cluster_head: self.cluster_head.bind(g, requires_grad),
        }
    }

    /// Frozen encoder features for evaluation.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.apply(x)
    }

    /// Unit-norm cluster-head embeddings, computed without a graph.
    pub fn cluster_embeddings(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xt = g.constant(x.clone());
        let h = encode(&mut g, &vars.encoder, xt)?;
        let hbar = project_cluster(&mut g, &vars.cluster_head, h)?;
        Ok(g.value(hbar).clone())
    }
}

pub struct ModelVars {
    pub encoder: MlpVars,
    pub contrastive_head: MlpVars,
    pub cluster_head: MlpVars,
}

/// Encoder forward pass: n×input_dim → n×encoder_out_dim.
pub fn encode(g: &mut Graph, encoder: &MlpVars, x: Tensor) -> Result<Tensor> {
    encoder.forward(g, x)
}

/// Contrastive-head embeddings z, unit-norm rows.
pub fn project_contrastive(g: &mut Graph, head: &MlpVars, h: Tensor) -> Result<Tensor> {
    let out = head.forward(g, h)?;
    Ok(g.l2_normalize_rows(out)?)
}

/// Cluster-head embeddings, unit-norm rows. Callers that derive cluster
/// assignments from these must detach them before any loss sees them.
pub fn project_cluster(g: &mut Graph, head: &MlpVars, h: Tensor) -> Result<Tensor> {
    let out = head.forward(g, h)?;
    Ok(g.l2_normalize_rows(out)?)
}
