use poseae_autodiff::{Graph, NodeId, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use super::{images_tensor, Model, ModelKind};
use crate::error::Result;
use crate::losses::{LatentPair, LossWeights};
use crate::nn::{Linear, Mlp};
use crate::pose::{Pose, Vec3};
use crate::rng::{purpose, stream};
use crate::scene::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub trunk_widths: Vec<usize>,
    /// Initial bias of the position head (mean train position).
    pub position_prior: Vec3,
    pub init_loss_weights: LossWeights,
    pub init_seed: u64,
}

/// Absolute pose regressor: image trunk, position/orientation branches
/// producing the latents `z_x`, `z_q`, and one affine head per output.
#[derive(Debug, Clone, PartialEq)]
pub struct AprModel {
    config: AprConfig,
    params: ParamSet,
    trunk: Mlp,
    branch_x: Linear,
    branch_q: Linear,
    pub(crate) head_x: Linear,
    pub(crate) head_q: Linear,
    pub(crate) s_x: usize,
    pub(crate) s_q: usize,
}

impl Model for AprModel {
    const KIND: ModelKind = ModelKind::Apr;
    type Config = AprConfig;

    fn from_config(cfg: &AprConfig) -> Result<Self> {
        let mut rng = stream(cfg.init_seed, purpose::INIT, ModelKind::Apr as u64);
        let mut params = ParamSet::new();
        let r = cfg.resolution;
        let mut widths = vec![r * r * 3];
        widths.extend(&cfg.trunk_widths);
        let feat = *widths.last().unwrap();
        let trunk = Mlp::init(&mut params, &mut rng, "trunk", &widths, true);
        let branch_x = Linear::init(&mut params, &mut rng, "branch_x", feat, cfg.latent_dim, true);
        let branch_q = Linear::init(&mut params, &mut rng, "branch_q", feat, cfg.latent_dim, true);
        let head_x = Linear::init(&mut params, &mut rng, "head_x", cfg.latent_dim, 3, false);
        let head_q = Linear::init(&mut params, &mut rng, "head_q", cfg.latent_dim, 4, false);
        params
            .get_mut(head_x.bias)
            .data_mut()
            .copy_from_slice(&cfg.position_prior);
        params.get_mut(head_q.bias).data_mut()[0] = 1.0;
        let s_x = params.push("s_x", Tensor::scalar(cfg.init_loss_weights.s_x));
        let s_q = params.push("s_q", Tensor::scalar(cfg.init_loss_weights.s_q));
        Ok(Self {
            config: cfg.clone(),
            params,
            trunk,
            branch_x,
            branch_q,
            head_x,
            head_q,
            s_x,
            s_q,
        })
    }

    fn config(&self) -> &AprConfig {
        &self.config
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl AprModel {
    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            s_x: self.params.get(self.s_x).item(),
            s_q: self.params.get(self.s_q).item(),
        }
    }

    /// Image batch `[b, 3HW]` to `(z_x, z_q)`, each `[b, d]`.
    pub fn encode(&self, g: &mut Graph<'_>, ids: &[NodeId], images: NodeId) -> Result<(NodeId, NodeId)> {
        let f = self.trunk.forward(g, ids, images)?;
        let zx = self.branch_x.forward(g, ids, f)?;
        let zx = g.relu(zx)?;
        let zq = self.branch_q.forward(g, ids, f)?;
        let zq = g.relu(zq)?;
        Ok((zx, zq))
    }

    /// Latents to position `[b,3]` and raw quaternion `[b,4]`.
    pub fn regress(
        &self,
        g: &mut Graph<'_>,
        ids: &[NodeId],
        zx: NodeId,
        zq: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let x = self.head_x.forward(g, ids, zx)?;
        let q = self.head_q.forward(g, ids, zq)?;
        Ok((x, q))
    }

    /// Heads applied to a latent pair outside any graph; the returned pose
    /// has a normalized quaternion.
    pub fn decode_latents(&self, z: &LatentPair) -> Result<Pose> {
        let x = self.head_x.apply(&self.params, &z.zx);
        let q = self.head_q.apply(&self.params, &z.zq);
        Pose::new([x[0], x[1], x[2]], [q[0], q[1], q[2], q[3]])
    }

    /// Latents and regressed pose for each image.
    pub fn predict(&self, images: &[&Image]) -> Result<Vec<(LatentPair, Pose)>> {
        let input = images_tensor(images, self.config.resolution)?;
        let mut g = Graph::new();
        let ids = self.params.bind_frozen(&mut g);
        let xi = g.constant(input);
        let (zx, zq) = self.encode(&mut g, &ids, xi)?;
        let (x, q) = self.regress(&mut g, &ids, zx, zq)?;
        (0..images.len())
            .map(|i| {
                let xr = g.value(x).row(i);
                let qr = g.value(q).row(i);
                Ok((
                    LatentPair::new(g.value(zx).row(i).to_vec(), g.value(zq).row(i).to_vec())?,
                    Pose::new([xr[0], xr[1], xr[2]], [qr[0], qr[1], qr[2], qr[3]])?,
                ))
            })
            .collect()
    }

    pub fn forward(&self, image: &Image) -> Result<(LatentPair, Pose)> {
        Ok(self.predict(&[image])?.remove(0))
    }
}
