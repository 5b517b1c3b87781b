use poseae_autodiff::{Graph, NodeId, ParamSet};
use serde::{Deserialize, Serialize};

use super::{images_tensor, Model, ModelKind};
use crate::error::Result;
use crate::nn::{Linear, Mlp};
use crate::pose::Vec3;
use crate::rng::{purpose, stream};
use crate::scene::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RprConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub trunk_widths: Vec<usize>,
    pub init_seed: u64,
}

/// Siamese regressor of the world-frame translation between two images.
///
/// One image encoder is applied to both inputs; the concatenated features
/// pass through two affine+ReLU layers to width `d` and an affine head.
#[derive(Debug, Clone, PartialEq)]
pub struct RprModel {
    config: RprConfig,
    params: ParamSet,
    encoder: Mlp,
    fuse: Mlp,
    head: Linear,
}

impl Model for RprModel {
    const KIND: ModelKind = ModelKind::Rpr;
    type Config = RprConfig;

    fn from_config(cfg: &RprConfig) -> Result<Self> {
        let mut rng = stream(cfg.init_seed, purpose::INIT, ModelKind::Rpr as u64);
        let mut params = ParamSet::new();
        let r = cfg.resolution;
        let mut widths = vec![r * r * 3];
        widths.extend(&cfg.trunk_widths);
        let feat = *widths.last().unwrap();
        let encoder = Mlp::init(&mut params, &mut rng, "encoder", &widths, true);
        let fuse = Mlp::init(
            &mut params,
            &mut rng,
            "fuse",
            &[2 * feat, cfg.latent_dim, cfg.latent_dim],
            true,
        );
        let head = Linear::init(&mut params, &mut rng, "head", cfg.latent_dim, 3, false);
        Ok(Self {
            config: cfg.clone(),
            params,
            encoder,
            fuse,
            head,
        })
    }

    fn config(&self) -> &RprConfig {
        &self.config
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl RprModel {
    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    /// Predicted `x_b - x_a` for image batches `a`, `b` (`[n, 3HW]` each).
    pub fn forward(&self, g: &mut Graph<'_>, ids: &[NodeId], a: NodeId, b: NodeId) -> Result<NodeId> {
        let fa = self.encoder.forward(g, ids, a)?;
        let fb = self.encoder.forward(g, ids, b)?;
        let f = g.concat(&[fa, fb])?;
        let h = self.fuse.forward(g, ids, f)?;
        self.head.forward(g, ids, h)
    }

    pub fn predict(&self, pairs: &[(&Image, &Image)]) -> Result<Vec<Vec3>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let a: Vec<&Image> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<&Image> = pairs.iter().map(|p| p.1).collect();
        let mut g = Graph::new();
        let ids = self.params.bind_frozen(&mut g);
        let ai = g.constant(images_tensor(&a, self.config.resolution)?);
        let bi = g.constant(images_tensor(&b, self.config.resolution)?);
        let out = self.forward(&mut g, &ids, ai, bi)?;
        Ok((0..pairs.len())
            .map(|i| {
                let r = g.value(out).row(i);
                [r[0], r[1], r[2]]
            })
            .collect())
    }
}
