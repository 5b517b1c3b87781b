//! Checkpoint files: one JSON header line, a newline, then the parameters
//! followed by the optimizer moments as little-endian `f64`.

use std::fs;
use std::path::Path;

use poseae_autodiff::{OptimKind, OptimState, ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::losses::LossWeights;
use crate::models::{AprModel, Model, ModelKind};

const FORMAT: &str = "poseae-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimHeader {
    kind: String,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    weight_decay: f64,
    step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    kind: ModelKind,
    config: serde_json::Value,
    config_digest: String,
    epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss_weights: Option<LossWeights>,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimHeader>,
}

/// Serialized model weights, optimizer state and provenance digest.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// The model's own configuration.
    pub config: serde_json::Value,
    /// Digest of the run configuration the model was trained under.
    pub config_digest: String,
    /// Number of completed training epochs.
    pub epoch: usize,
    /// Full run configuration, when the checkpoint came from a pipeline run.
    pub run_config: Option<serde_json::Value>,
    pub params: ParamSet,
    pub optim: Option<OptimState>,
}

/// Hex SHA-256 of a value's compact JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configs serialize");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn optim_kind_name(kind: OptimKind) -> &'static str {
    match kind {
        OptimKind::Adam => "adam",
        OptimKind::AdamW => "adamw",
    }
}

impl Checkpoint {
    pub fn new<M: Model>(model: &M, optim: Option<&OptimState>, config_digest: &str, epoch: usize) -> Self {
        Self {
            kind: M::KIND,
            config: serde_json::to_value(model.config()).expect("configs serialize"),
            config_digest: config_digest.to_string(),
            epoch,
            run_config: None,
            params: model.params().clone(),
            optim: optim.cloned(),
        }
    }

    /// Rebuilds the model; fails if the checkpoint holds another kind.
    pub fn to_model<M: Model>(&self) -> Result<M> {
        if self.kind != M::KIND {
            return Err(invalid!(
                "checkpoint holds a {} model, expected {}",
                self.kind.file_stem(),
                M::KIND.file_stem()
            ));
        }
        let cfg: M::Config = serde_json::from_value(self.config.clone())
            .map_err(|e| invalid!("checkpoint model config: {e}"))?;
        M::with_params(&cfg, self.params.clone())
    }

    fn loss_weights(&self) -> Result<Option<LossWeights>> {
        if self.kind != ModelKind::Apr {
            return Ok(None);
        }
        let apr: AprModel = self.to_model()?;
        Ok(Some(apr.loss_weights()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: FORMAT.to_string(),
            kind: self.kind,
            config: self.config.clone(),
            config_digest: self.config_digest.clone(),
            epoch: self.epoch,
            run_config: self.run_config.clone(),
            loss_weights: self.loss_weights()?,
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            optimizer: self.optim.as_ref().map(|o| OptimHeader {
                kind: optim_kind_name(o.kind).to_string(),
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                lr: o.lr,
                weight_decay: o.weight_decay,
                step: o.step_count(),
            }),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| invalid!("checkpoint header: {e}"))?;
        out.push(b'\n');
        let mut put = |ts: &[Tensor]| {
            for t in ts {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        put(self.params.tensors());
        if let Some(o) = &self.optim {
            put(o.first_moments());
            put(o.second_moments());
        }
        Ok(out)
    }

    /// Parses checkpoint bytes; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::format(path, "missing header line"))?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format(path, e))?;
        if header.format != FORMAT {
            return Err(Error::format(path, format!("unknown format `{}`", header.format)));
        }
        let mut blob = bytes[nl + 1..].chunks_exact(8);
        if bytes[nl + 1..].len() % 8 != 0 {
            return Err(Error::format(path, "blob length is not a multiple of 8"));
        }
        let mut take = |shape: &[usize]| -> Result<Tensor> {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = blob
                .by_ref()
                .take(n)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if data.len() != n {
                return Err(Error::format(path, "blob is shorter than the header declares"));
            }
            Tensor::new(shape.to_vec(), data).map_err(|e| Error::format(path, e))
        };
        let mut params = ParamSet::new();
        for t in &header.tensors {
            let value = take(&t.shape)?;
            params.push(t.name.clone(), value);
        }
        let optim = match &header.optimizer {
            None => None,
            Some(o) => {
                let first = header.tensors.iter().map(|t| take(&t.shape)).collect::<Result<Vec<_>>>()?;
                let second = header.tensors.iter().map(|t| take(&t.shape)).collect::<Result<Vec<_>>>()?;
                let kind = match o.kind.as_str() {
                    "adam" => OptimKind::Adam,
                    "adamw" => OptimKind::AdamW,
                    other => return Err(Error::format(path, format!("unknown optimizer `{other}`"))),
                };
                Some(
                    OptimState::from_parts(kind, o.beta1, o.beta2, o.eps, o.lr, o.weight_decay, first, second, o.step)
                        .map_err(|e| Error::format(path, e))?,
                )
            }
        };
        if blob.next().is_some() {
            return Err(Error::format(path, "trailing bytes after the declared tensors"));
        }
        let ckpt = Self {
            kind: header.kind,
            config: header.config,
            config_digest: header.config_digest,
            epoch: header.epoch,
            run_config: header.run_config,
            params,
            optim,
        };
        if ckpt.loss_weights().map_err(|e| Error::format(path, e))? != header.loss_weights {
            return Err(Error::format(path, "loss weights disagree with the stored parameters"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{RprConfig, RprModel};

    fn tiny_rpr() -> RprModel {
        RprModel::from_config(&RprConfig {
            resolution: 16,
            latent_dim: 4,
            trunk_widths: vec![8],
            init_seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn load_then_save_is_byte_identical() {
        let m = tiny_rpr();
        let mut optim = OptimState::adam(m.params(), 1e-3);
        let grads: Vec<Tensor> = m.params().tensors().iter().map(|t| t.map(|v| v * 0.5 + 0.1)).collect();
        let mut p = m.params().clone();
        optim.step(&mut p, &grads).unwrap();
        let m = RprModel::with_params(m.config(), p).unwrap();
        let mut ck = Checkpoint::new(&m, Some(&optim), "abc", 7);
        ck.run_config = Some(serde_json::json!({"name": "t"}));
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let m2: RprModel = back.to_model().unwrap();
        assert_eq!(m2, m);
    }

    #[test]
    fn wrong_kind_and_truncation_rejected() {
        let ck = Checkpoint::new(&tiny_rpr(), None, "d", 0);
        assert!(ck.to_model::<AprModel>().is_err());
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8], Path::new("x")).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(Checkpoint::from_bytes(&extra, Path::new("x")).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = digest_of(&serde_json::json!({"a": 1, "b": [1.5, 2.0]}));
        assert_eq!(a, digest_of(&serde_json::json!({"a": 1, "b": [1.5, 2.0]})));
        assert_ne!(a, digest_of(&serde_json::json!({"a": 2, "b": [1.5, 2.0]})));
        assert_eq!(a.len(), 64);
    }
}
