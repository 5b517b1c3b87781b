//! Pose losses, the learnable uncertainty weighting and the distillation
//! objective, in plain `f64` form and as graph builders for training.

use poseae_autodiff::{Graph, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pose::{orientation_loss, position_loss, Quat, Vec3};

/// Position and orientation latent codes, each of length `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPair {
    pub zx: Vec<f64>,
    pub zq: Vec<f64>,
}

impl LatentPair {
    pub fn new(zx: Vec<f64>, zq: Vec<f64>) -> Result<Self> {
        if zx.len() != zq.len() || zx.is_empty() {
            return Err(invalid!(
                "latent pair halves must share a positive length, got {} and {}",
                zx.len(),
                zq.len()
            ));
        }
        if !zx.iter().chain(&zq).all(|v| v.is_finite()) {
            return Err(invalid!("latent pair has non-finite entries"));
        }
        Ok(Self { zx, zq })
    }

    pub fn dim(&self) -> usize {
        self.zx.len()
    }

    /// `[z_x; z_q]`, length `2d`.
    pub fn concat(&self) -> Vec<f64> {
        self.zx.iter().chain(&self.zq).copied().collect()
    }
}

/// Learned log-variance weights `s_x`, `s_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub s_x: f64,
    pub s_q: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { s_x: 0.0, s_q: -3.0 }
    }
}

/// `L_x exp(-s_x) + s_x + L_q exp(-s_q) + s_q`.
pub fn learnable_pose_loss(lx: f64, lq: f64, w: &LossWeights) -> f64 {
    lx * (-w.s_x).exp() + w.s_x + lq * (-w.s_q).exp() + w.s_q
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Student objective for one sample: latent match on both halves plus the
/// weighted pose loss of the pose decoded from the student latents.
/// `decoded_q` is the raw (unnormalized) head output.
pub fn distillation_loss(
    teacher: &LatentPair,
    student: &LatentPair,
    decoded_x: &Vec3,
    decoded_q: &Quat,
    gt_x: &Vec3,
    gt_q: &Quat,
    w: &LossWeights,
) -> Result<f64> {
    if teacher.dim() != student.dim()
        || teacher.zq.len() != student.zq.len()
        || teacher.zx.len() != teacher.zq.len()
    {
        return Err(invalid!(
            "latent dimension mismatch: teacher {} vs student {}",
            teacher.dim(),
            student.dim()
        ));
    }
    let lx = position_loss(decoded_x, gt_x);
    let lq = orientation_loss(decoded_q, gt_q)?;
    Ok(l2_dist(&teacher.zx, &student.zx)
        + l2_dist(&teacher.zq, &student.zq)
        + learnable_pose_loss(lx, lq, w))
}

/// Batch means of the position and orientation losses.
/// `x_pred` is `[b,3]`, `q_pred` `[b,4]` (raw); targets match.
pub fn pose_loss_nodes(
    g: &mut Graph<'_>,
    x_pred: NodeId,
    q_pred: NodeId,
    x_gt: NodeId,
    q_gt: NodeId,
) -> Result<(NodeId, NodeId)> {
    let dx = g.sub(x_pred, x_gt)?;
    let nx = g.l2norm(dx)?;
    let lx = g.mean(nx)?;
    let qn = g.normalize(q_pred)?;
    let dq = g.sub(q_gt, qn)?;
    let nq = g.l2norm(dq)?;
    let lq = g.mean(nq)?;
    Ok((lx, lq))
}

/// Graph form of [`learnable_pose_loss`]; `s_x`, `s_q` are scalar nodes.
pub fn learnable_pose_loss_node(
    g: &mut Graph<'_>,
    lx: NodeId,
    lq: NodeId,
    s_x: NodeId,
    s_q: NodeId,
) -> Result<NodeId> {
    let nsx = g.negate(s_x)?;
    let ex = g.exp(nsx)?;
    let tx = g.mul(lx, ex)?;
    let nsq = g.negate(s_q)?;
    let eq = g.exp(nsq)?;
    let tq = g.mul(lq, eq)?;
    let a = g.add(tx, s_x)?;
    let b = g.add(tq, s_q)?;
    Ok(g.add(a, b)?)
}

/// Batch mean of `||a_i - b_i||`.
pub fn mean_row_distance(g: &mut Graph<'_>, a: NodeId, b: NodeId) -> Result<NodeId> {
    let d = g.sub(a, b)?;
    let n = g.l2norm(d)?;
    Ok(g.mean(n)?)
}
