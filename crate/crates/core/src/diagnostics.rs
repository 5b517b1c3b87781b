//! Finite-difference checks of each model's training objective at
//! initialization, on small random batches.

use poseae_autodiff::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::losses::LatentPair;
use crate::models::{AprModel, DecoderModel, Model, ModelKind, PaeModel, RprModel};
use crate::pose::{canonical, Pose};
use crate::rng::{purpose, stream};
use crate::train::{apr_objective, decoder_objective, pae_objective, rpr_objective, PaeBatch};

const BATCH: usize = 2;
const MAX_ATTEMPTS: u64 = 64;

fn uniform(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches")
}

fn random_poses(rng: &mut SplitMix64, extent: f64) -> Vec<Pose> {
    (0..BATCH)
        .map(|_| {
            let x = std::array::from_fn(|_| rng.random_range(-extent..extent));
            let mut q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            q.iter_mut().for_each(|v| *v /= n);
            Pose { x, q: canonical(q) }
        })
        .collect()
}

fn pose_tensors(poses: &[Pose]) -> (Tensor, Tensor) {
    (
        Tensor::new(vec![poses.len(), 3], poses.iter().flat_map(|p| p.x).collect()).expect("3 per pose"),
        Tensor::new(vec![poses.len(), 4], poses.iter().flat_map(|p| p.q).collect()).expect("4 per pose"),
    )
}

/// Gradient check of one model kind's objective, built from `cfg`'s
/// architecture. Random batches are redrawn until no ReLU input lies
/// within ten probe steps of its kink, so the finite differences are
/// taken on a smooth piece of the loss.
pub fn model_grad_check(kind: ModelKind, cfg: &RunConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let res = cfg.dataset.resolution;
    let pixels = res * res * 3;
    let extent = cfg.dataset.extent;
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream(cfg.model.init_seed, purpose::ORACLE, (kind as u64) << 32 | attempt);
        let report = match kind {
            ModelKind::Apr => {
                let m = AprModel::from_config(&cfg.apr_config([0.0; 3]))?;
                let images = uniform(&mut rng, &[BATCH, pixels], 0.0, 1.0);
                let (xs, qs) = pose_tensors(&random_poses(&mut rng, extent));
                grad_check(
                    m.params(),
                    |g, ids| apr_objective(&m, g, ids, images.clone(), xs.clone(), qs.clone()).map_err(into_ad),
                    opts,
                )?
            }
            ModelKind::Pae => {
                let m = PaeModel::from_config(&cfg.pae_config())?;
                let teacher = AprModel::from_config(&cfg.apr_config([0.0; 3]))?;
                let poses = random_poses(&mut rng, extent);
                let with_scene: Vec<(Pose, usize)> =
                    poses.iter().enumerate().map(|(i, p)| (*p, i % cfg.dataset.n_scenes)).collect();
                let (x_in, q_in) = m.inputs(&with_scene)?;
                let d = cfg.model.latent_dim;
                let (xs, qs) = pose_tensors(&poses);
                let batch = || PaeBatch {
                    x_in: x_in.clone(),
                    q_in: q_in.clone(),
                    teacher_zx: uniform(&mut stream(attempt, purpose::ORACLE, 1), &[BATCH, d], 0.0, 1.0),
                    teacher_zq: uniform(&mut stream(attempt, purpose::ORACLE, 2), &[BATCH, d], 0.0, 1.0),
                    xs: xs.clone(),
                    qs: qs.clone(),
                };
                grad_check(
                    m.params(),
                    |g, ids| pae_objective(&m, &teacher, g, ids, batch()).map(|(l, _)| l).map_err(into_ad),
                    opts,
                )?
            }
            ModelKind::Decoder => {
                let m = DecoderModel::from_config(&cfg.decoder_config())?;
                let d = cfg.model.latent_dim;
                let rows = (0..BATCH)
                    .map(|_| {
                        let z = LatentPair::new(
                            (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
                            (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
                        )?;
                        m.combine(&z)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let inputs = crate::nn::stack_rows(&rows)?;
                let targets = uniform(&mut rng, &[BATCH, pixels], 0.0, 1.0);
                grad_check(
                    m.params(),
                    |g, ids| decoder_objective(&m, g, ids, inputs.clone(), targets.clone()).map_err(into_ad),
                    opts,
                )?
            }
            ModelKind::Rpr => {
                let m = RprModel::from_config(&cfg.rpr_config())?;
                let a = uniform(&mut rng, &[BATCH, pixels], 0.0, 1.0);
                let b = uniform(&mut rng, &[BATCH, pixels], 0.0, 1.0);
                let offsets = uniform(&mut rng, &[BATCH, 3], -extent, extent);
                grad_check(
                    m.params(),
                    |g, ids| rpr_objective(&m, g, ids, a.clone(), b.clone(), offsets.clone()).map_err(into_ad),
                    opts,
                )?
            }
        };
        if report.kink_free(opts.step) {
            return Ok(report);
        }
        last = Some(report);
    }
    Err(Error::Numerical(format!(
        "no kink-free batch for the {} objective in {MAX_ATTEMPTS} attempts (last: {:?})",
        kind.file_stem(),
        last
    )))
}

fn into_ad(e: Error) -> poseae_autodiff::AutodiffError {
    match e {
        Error::Autodiff(e) => e,
        other => poseae_autodiff::AutodiffError::Invalid(other.to_string()),
    }
}
