use poseae_autodiff::{Graph, NodeId, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use super::{Model, ModelKind};
use crate::error::{invalid, Result};
use crate::fourier::FourierSpec;
use crate::losses::LatentPair;
use crate::nn::Mlp;
use crate::pose::Pose;
use crate::rng::{purpose, stream};

/// Quaternion components are halved before encoding so that, like
/// positions and scene indices, every encoded input lies in [-1/2, 1/2].
pub const QUAT_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaeConfig {
    pub latent_dim: usize,
    pub fourier_levels: usize,
    pub hidden_widths: Vec<usize>,
    /// Scenes known to the model; more than one adds the scene-index encoding.
    pub n_scenes: usize,
    /// Positions are divided by this before encoding, meters; twice the
    /// largest camera distance maps positions into [-1/2, 1/2].
    pub position_scale: f64,
    pub init_seed: u64,
}

/// Pose auto-encoder: two Fourier-feature MLPs mapping a pose (and scene
/// index) to the teacher's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct PaeModel {
    config: PaeConfig,
    params: ParamSet,
    mlp_x: Mlp,
    mlp_q: Mlp,
}

impl Model for PaeModel {
    const KIND: ModelKind = ModelKind::Pae;
    type Config = PaeConfig;

    fn from_config(cfg: &PaeConfig) -> Result<Self> {
        if cfg.n_scenes == 0 || !(cfg.position_scale > 0.0) {
            return Err(invalid!("PAE needs n_scenes >= 1 and a positive position scale"));
        }
        let spec = FourierSpec::new(cfg.fourier_levels);
        let scene_len = if cfg.n_scenes > 1 { spec.encoded_len(1) } else { 0 };
        let mut rng = stream(cfg.init_seed, purpose::INIT, ModelKind::Pae as u64);
        let mut params = ParamSet::new();
        let build = |params: &mut ParamSet, rng: &mut _, name: &str, input: usize| {
            let mut widths = vec![input];
            widths.extend(&cfg.hidden_widths);
            widths.push(cfg.latent_dim);
            Mlp::init(params, rng, name, &widths, true)
        };
        let mlp_x = build(&mut params, &mut rng, "mlp_x", spec.encoded_len(3) + scene_len);
        let mlp_q = build(&mut params, &mut rng, "mlp_q", spec.encoded_len(4) + scene_len);
        Ok(Self {
            config: cfg.clone(),
            params,
            mlp_x,
            mlp_q,
        })
    }

    fn config(&self) -> &PaeConfig {
        &self.config
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl PaeModel {
    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn is_multi_scene(&self) -> bool {
        self.config.n_scenes > 1
    }

    pub fn fourier(&self) -> FourierSpec {
        FourierSpec::new(self.config.fourier_levels)
    }

    /// Encoded network inputs `([b, |x|], [b, |q|])` for a batch of poses.
    pub fn inputs(&self, poses: &[(Pose, usize)]) -> Result<(Tensor, Tensor)> {
        let spec = self.fourier();
        let mut xs = Vec::new();
        let mut qs = Vec::new();
        for (pose, scene) in poses {
            if *scene >= self.config.n_scenes {
                return Err(invalid!(
                    "scene {scene} unknown to a PAE trained on {} scene(s)",
                    self.config.n_scenes
                ));
            }
            let s = self.config.position_scale;
            spec.encode_into(&[pose.x[0] / s, pose.x[1] / s, pose.x[2] / s], &mut xs)?;
            let q = pose.q.map(|c| c / QUAT_SCALE);
            spec.encode_into(&q, &mut qs)?;
            if self.is_multi_scene() {
                let code = [*scene as f64 / (2.0 * self.config.n_scenes as f64)];
                spec.encode_into(&code, &mut xs)?;
                spec.encode_into(&code, &mut qs)?;
            }
        }
        let b = poses.len();
        Ok((
            Tensor::new(vec![b, xs.len() / b], xs)?,
            Tensor::new(vec![b, qs.len() / b], qs)?,
        ))
    }

    /// `(ẑ_x, ẑ_q)` nodes, each `[b, d]`.
    pub fn encode(
        &self,
        g: &mut Graph<'_>,
        ids: &[NodeId],
        x_in: NodeId,
        q_in: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let zx = self.mlp_x.forward(g, ids, x_in)?;
        let zq = self.mlp_q.forward(g, ids, q_in)?;
        Ok((zx, zq))
    }

    pub fn predict(&self, poses: &[(Pose, usize)]) -> Result<Vec<LatentPair>> {
        if poses.is_empty() {
            return Ok(Vec::new());
        }
        let (xt, qt) = self.inputs(poses)?;
        let mut g = Graph::new();
        let ids = self.params.bind_frozen(&mut g);
        let xi = g.constant(xt);
        let qi = g.constant(qt);
        let (zx, zq) = self.encode(&mut g, &ids, xi, qi)?;
        (0..poses.len())
            .map(|i| LatentPair::new(g.value(zx).row(i).to_vec(), g.value(zq).row(i).to_vec()))
            .collect()
    }

    pub fn forward(&self, pose: &Pose, scene: usize) -> Result<LatentPair> {
        Ok(self.predict(&[(*pose, scene)])?.remove(0))
    }
}
