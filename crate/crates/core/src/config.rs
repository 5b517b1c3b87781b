//! Run configuration: one JSON document holding every tunable, with
//! dotted-path `key=value` overrides and per-stage digests that tie
//! artifacts to the settings they were produced with.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint::digest_of;
use crate::dataset::{read_json, DatasetConfig};
use crate::error::{invalid, Error, Result};
use crate::losses::LossWeights;
use crate::models::{AprConfig, Combine, DecoderConfig, PaeConfig, RprConfig};
use crate::pose::Vec3;
use crate::refine::RefineConfig;
use crate::train::{LrSchedule, RprPairing, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub latent_dim: usize,
    pub trunk_widths: Vec<usize>,
    pub fourier_levels: usize,
    pub pae_widths: Vec<usize>,
    /// Position normalizer for the PAE input; `null` uses 5x the extent.
    pub position_scale: Option<f64>,
    pub decoder_widths: Vec<usize>,
    pub decoder_combine: Combine,
    pub rpr_trunk_widths: Vec<usize>,
    pub init_loss_weights: LossWeights,
    pub init_seed: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            trunk_widths: vec![256, 256],
            fourier_levels: 6,
            pae_widths: vec![64, 128, 256],
            position_scale: None,
            decoder_widths: vec![512, 1024, 2048],
            decoder_combine: Combine::Sum,
            rpr_trunk_widths: vec![256, 256],
            init_loss_weights: LossWeights::default(),
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub apr: TrainConfig,
    pub pae: TrainConfig,
    pub decoder: TrainConfig,
    pub rpr: TrainConfig,
    pub rpr_pairing: RprPairing,
}

fn adam(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        lr,
        schedule: LrSchedule::Cosine,
        weight_decay: 0.0,
        seed: 0,
    }
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            apr: adam(300, 1e-3),
            pae: adam(300, 1e-3),
            decoder: adam(30, 1e-2),
            rpr: adam(150, 1e-3),
            rpr_pairing: RprPairing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Random-guess position noise as a fraction of the scene extent.
    pub guess_sigma_fraction: f64,
    pub guess_orientation_deg: f64,
    pub guess_trials: usize,
    pub guess_seed: u64,
    /// Fourier levels swept by the ablation.
    pub ablation_levels: Vec<usize>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            guess_sigma_fraction: 0.1,
            guess_orientation_deg: 2.0,
            guess_trials: 100,
            guess_seed: 0,
            ablation_levels: vec![0, 3, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelSettings,
    pub training: TrainingSettings,
    pub refine: RefineConfig,
    pub experiments: ExperimentSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            output_dir: "runs".into(),
            dataset: DatasetConfig::default(),
            model: ModelSettings::default(),
            training: TrainingSettings::default(),
            refine: RefineConfig::default(),
            experiments: ExperimentSettings::default(),
        }
    }
}

/// Pipeline stages whose artifacts carry a config digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dataset,
    Apr,
    Pae,
    Decoder,
    Rpr,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate().map_err(|e| Error::format(path, e))?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides; `key` is a dotted path into the JSON
    /// form and `value` is parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| invalid!("override `{set}` is not of the form key=value"))?;
            let value: Value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut doc;
            for part in key.split('.') {
                node = match node {
                    Value::Object(map) => map
                        .get_mut(part)
                        .ok_or_else(|| invalid!("unknown config key `{key}`"))?,
                    Value::Array(items) => {
                        let i: usize = part
                            .parse()
                            .map_err(|_| invalid!("`{part}` in `{key}` is not an index"))?;
                        let len = items.len();
                        items
                            .get_mut(i)
                            .ok_or_else(|| invalid!("index {i} out of range ({len}) in `{key}`"))?
                    }
                    _ => return Err(invalid!("unknown config key `{key}`")),
                };
            }
            *node = value;
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| invalid!("config override rejected: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid!("run name must be a non-empty path component"));
        }
        if self.model.latent_dim == 0 {
            return Err(invalid!("latent_dim must be positive"));
        }
        if self.experiments.guess_sigma_fraction <= 0.0 || self.experiments.guess_trials == 0 {
            return Err(invalid!("random-guess experiment needs sigma > 0 and at least one trial"));
        }
        self.refine.validate()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    pub fn position_scale(&self) -> f64 {
        self.model
            .position_scale
            .unwrap_or(5.0 * self.dataset.extent)
    }

    /// Digest of everything that influences the given stage's artifact.
    pub fn stage_digest(&self, stage: Stage) -> String {
        let d = &self.dataset;
        let m = &self.model;
        let t = &self.training;
        match stage {
            Stage::Dataset => digest_of(&("dataset", d)),
            Stage::Apr => digest_of(&("apr", d, m, &t.apr)),
            Stage::Pae => digest_of(&("pae", d, m, &t.apr, &t.pae)),
            Stage::Decoder => digest_of(&("decoder", d, m, &t.apr, &t.pae, &t.decoder)),
            Stage::Rpr => {
                let upstream = t
                    .rpr_pairing
                    .decoded_references
                    .then(|| self.stage_digest(Stage::Decoder));
                digest_of(&("rpr", d, m, &t.rpr, &t.rpr_pairing, upstream))
            }
        }
    }

    /// Digest of the whole configuration.
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    pub fn apr_config(&self, position_prior: Vec3) -> AprConfig {
        AprConfig {
            resolution: self.dataset.resolution,
            latent_dim: self.model.latent_dim,
            trunk_widths: self.model.trunk_widths.clone(),
            position_prior,
            init_loss_weights: self.model.init_loss_weights,
            init_seed: self.model.init_seed,
        }
    }

    pub fn pae_config(&self) -> PaeConfig {
        PaeConfig {
            latent_dim: self.model.latent_dim,
            fourier_levels: self.model.fourier_levels,
            hidden_widths: self.model.pae_widths.clone(),
            n_scenes: self.dataset.n_scenes,
            position_scale: self.position_scale(),
            init_seed: self.model.init_seed,
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            latent_dim: self.model.latent_dim,
            hidden_widths: self.model.decoder_widths.clone(),
            resolution: self.dataset.resolution,
            combine: self.model.decoder_combine,
            init_seed: self.model.init_seed,
        }
    }

    pub fn rpr_config(&self) -> RprConfig {
        RprConfig {
            resolution: self.dataset.resolution,
            latent_dim: self.model.latent_dim,
            trunk_widths: self.model.rpr_trunk_widths.clone(),
            init_seed: self.model.init_seed,
        }
    }
}
