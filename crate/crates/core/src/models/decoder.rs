use poseae_autodiff::{Graph, NodeId, ParamSet};
use serde::{Deserialize, Serialize};

use super::{Model, ModelKind};
use crate::error::{invalid, Result};
use crate::losses::LatentPair;
use crate::nn::{stack_rows, Mlp};
use crate::rng::{purpose, stream};
use crate::scene::Image;

/// How the two pose latents are merged into the decoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combine {
    /// `ẑ_x + ẑ_q`, input width `d`.
    Sum,
    /// `[ẑ_x; ẑ_q]`, input width `2d`.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub resolution: usize,
    pub combine: Combine,
    pub init_seed: u64,
}

/// MLP from a pose encoding to an `H x W x 3` image.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    config: DecoderConfig,
    params: ParamSet,
    mlp: Mlp,
}

impl Model for DecoderModel {
    const KIND: ModelKind = ModelKind::Decoder;
    type Config = DecoderConfig;

    fn from_config(cfg: &DecoderConfig) -> Result<Self> {
        let mut rng = stream(cfg.init_seed, purpose::INIT, ModelKind::Decoder as u64);
        let mut params = ParamSet::new();
        let input = match cfg.combine {
            Combine::Sum => cfg.latent_dim,
            Combine::Concat => 2 * cfg.latent_dim,
        };
        let mut widths = vec![input];
        widths.extend(&cfg.hidden_widths);
        widths.push(cfg.resolution * cfg.resolution * 3);
        let mlp = Mlp::init(&mut params, &mut rng, "decoder", &widths, false);
        Ok(Self {
            config: cfg.clone(),
            params,
            mlp,
        })
    }

    fn config(&self) -> &DecoderConfig {
        &self.config
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl DecoderModel {
    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn combine(&self, z: &LatentPair) -> Result<Vec<f64>> {
        if z.dim() != self.config.latent_dim {
            return Err(invalid!(
                "decoder expects latent dimension {}, got {}",
                self.config.latent_dim,
                z.dim()
            ));
        }
        Ok(match self.config.combine {
            Combine::Sum => z.zx.iter().zip(&z.zq).map(|(a, b)| a + b).collect(),
            Combine::Concat => z.concat(),
        })
    }

    /// Unclamped output `[b, 3HW]`; training fits this directly.
    pub fn forward_raw(&self, g: &mut Graph<'_>, ids: &[NodeId], input: NodeId) -> Result<NodeId> {
        self.mlp.forward(g, ids, input)
    }

    /// Decoded images, clamped to [0, 1].
    pub fn decode(&self, latents: &[LatentPair]) -> Result<Vec<Image>> {
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        let rows = latents
            .iter()
            .map(|z| self.combine(z))
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let ids = self.params.bind_frozen(&mut g);
        let xi = g.constant(stack_rows(&rows)?);
        let out = self.forward_raw(&mut g, &ids, xi)?;
        let res = self.config.resolution;
        Ok((0..latents.len())
            .map(|i| Image {
                resolution: res,
                data: g
                    .value(out)
                    .row(i)
                    .iter()
                    .map(|v| v.clamp(0.0, 1.0) as f32)
                    .collect(),
            })
            .collect())
    }
}
