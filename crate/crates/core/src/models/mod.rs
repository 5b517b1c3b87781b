//! The trainable models: teacher APR, student PAE, image decoder and the
//! Siamese relative regressor.

mod apr;
mod decoder;
mod pae;
mod rpr;

pub use apr::{AprConfig, AprModel};
pub use decoder::{Combine, DecoderConfig, DecoderModel};
pub use pae::{PaeConfig, PaeModel};
pub use rpr::{RprConfig, RprModel};

use poseae_autodiff::{ParamSet, Tensor};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scene::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Apr,
    Pae,
    Decoder,
    Rpr,
}

impl ModelKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            ModelKind::Apr => "apr",
            ModelKind::Pae => "pae",
            ModelKind::Decoder => "decoder",
            ModelKind::Rpr => "rpr",
        }
    }
}

/// Common surface used by checkpointing and gradient checks.
pub trait Model: Sized {
    const KIND: ModelKind;
    type Config: Clone + Serialize + DeserializeOwned + PartialEq;

    /// Fresh model with weights drawn from the config's init seed.
    fn from_config(cfg: &Self::Config) -> Result<Self>;
    fn config(&self) -> &Self::Config;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Model with the given weights; names and shapes must match.
    fn with_params(cfg: &Self::Config, params: ParamSet) -> Result<Self> {
        let mut m = Self::from_config(cfg)?;
        crate::nn::replace_params(m.params_mut(), params)?;
        Ok(m)
    }
}

/// `[b, 3HW]` batch of flattened images.
pub fn images_tensor(images: &[&Image], resolution: usize) -> Result<Tensor> {
    let len = resolution * resolution * 3;
    let mut data = Vec::with_capacity(images.len() * len);
    for img in images {
        if img.resolution != resolution {
            return Err(invalid!(
                "image resolution {} does not match model resolution {resolution}",
                img.resolution
            ));
        }
        data.extend(img.data.iter().map(|v| *v as f64));
    }
    Ok(Tensor::new(vec![images.len(), len], data)?)
}
