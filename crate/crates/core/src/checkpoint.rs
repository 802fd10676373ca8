//! JSON checkpoint of the three networks and the prototype bank.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "protofair-checkpoint",
//!   "version": 1,
//!   "encoder_config": { "input_dim", "encoder_hidden", "encoder_out_dim", "head_hidden", "embed_dim" },
//!   "encoder":          [ { "weight": M, "bias": M }, ... ],
//!   "contrastive_head": [ ... ],
//!   "cluster_head":     [ ... ],
//!   "prototypes": null | { "k", "dim", "momentum", "reinit_period", "max_iters",
//!                          "last_init_epoch", "protos": null | M }
//! }
//! ```
//!
//! where `M = { "rows": r, "cols": c, "data": [r*c values, row-major] }`.
//! Weights are stored `fan_in × fan_out`; biases `1 × fan_out`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::{EncoderConfig, Mlp, Model};
use crate::prototypes::PrototypeBank;
use crate::{Error, Result};

pub const FORMAT: &str = "protofair-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder_config: EncoderConfig,
    pub encoder: Mlp,
    pub contrastive_head: Mlp,
    pub cluster_head: Mlp,
    pub prototypes: Option<PrototypeBank>,
}

impl Checkpoint {
    pub fn new(model: &Model, prototypes: Option<&PrototypeBank>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            encoder_config: model.config.clone(),
            encoder: model.encoder.clone(),
            contrastive_head: model.contrastive_head.clone(),
            cluster_head: model.cluster_head.clone(),
            prototypes: prototypes.cloned(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        self.check()?;
        Ok(Model {
            config: self.encoder_config,
            encoder: self.encoder,
            contrastive_head: self.contrastive_head,
            cluster_head: self.cluster_head,
        })
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let c = &self.encoder_config;
        c.validate()?;
        let ok = self.encoder.input_dim() == c.input_dim
            && self.encoder.output_dim() == c.encoder_out_dim
            && self.contrastive_head.input_dim() == c.encoder_out_dim
            && self.contrastive_head.output_dim() == c.embed_dim
            && self.cluster_head.input_dim() == c.encoder_out_dim
            && self.cluster_head.output_dim() == c.embed_dim;
        if !ok {
            return Err(Error::Checkpoint("network shapes do not match encoder_config".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.check()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn json_round_trip_is_exact() {
        let model = Model::init(EncoderConfig::default(), &mut stream(4, Stream::Init)).unwrap();
        let bank = PrototypeBank::new(3, 16, 0.99, 5).unwrap();
        let ck = Checkpoint::new(&model, Some(&bank));
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.into_model().unwrap(), model);
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let model = Model::init(EncoderConfig::default(), &mut stream(4, Stream::Init)).unwrap();
        let mut ck = Checkpoint::new(&model, None);
        ck.encoder_config.embed_dim = 8;
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
        let mut ck = Checkpoint::new(&model, None);
        ck.version = 7;
        assert!(matches!(Checkpoint::from_json(&ck.to_json().unwrap()), Err(Error::Checkpoint(_))));
    }
}
