//! Test-time position refinement over a database of train poses.
//!
//! A query latent `z_p = [z_x; z_q]` is approximated by an affine
//! combination of the PAE encodings of its nearest train poses; the same
//! weights applied to the train positions give the refined position.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use poseae_autodiff::{Graph, OptimState, ParamSet, Tensor};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, PoseRecord, Sample};
use crate::error::{invalid, Error, Result};
use crate::losses::LatentPair;
use crate::models::{AprModel, DecoderModel, PaeModel};
use crate::pose::{add3, canonical, dot4, norm3, norm4, position_loss, quat_mul, sub3, Pose, Quat, Vec3};
use crate::rng::{purpose, stream};
use crate::scene::{jitter_rotation, Image};

/// Damping added to the Gram matrix of the closed-form solve.
pub const KKT_DAMPING: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    /// Number of nearest train poses.
    pub k: usize,
    /// Outer iterations.
    pub outer: usize,
    /// AdamW steps per outer iteration.
    pub inner: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Solve for the weights exactly instead of iterating.
    pub closed_form: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            outer: 3,
            inner: 100,
            lr: 1e-3,
            weight_decay: 0.01,
            closed_form: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.outer == 0 || self.inner == 0 || !(self.lr > 0.0) {
            return Err(invalid!(
                "refinement needs k >= 2, at least one outer and inner step, and lr > 0"
            ));
        }
        Ok(())
    }
}

/// Train poses with their scene ids: seven reals and one integer each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseDatabase {
    entries: Vec<PoseRecord>,
}

impl PoseDatabase {
    pub fn new(entries: Vec<PoseRecord>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(Pose { x: e.x, q: e.q }).is_valid() {
                return Err(invalid!("pose database entry {i} is not a valid pose"));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_samples(samples: &[Sample]) -> Self {
        Self {
            entries: samples
                .iter()
                .map(|s| PoseRecord {
                    x: s.pose.x,
                    q: s.pose.q,
                    scene: s.scene,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoseRecord] {
        &self.entries
    }

    pub fn pose(&self, i: usize) -> Pose {
        Pose {
            x: self.entries[i].x,
            q: self.entries[i].q,
        }
    }

    /// Indices of the `k` entries closest to `x` (restricted to `scene`
    /// when given), nearest first; equal distances keep index order.
    pub fn knn(&self, x: &Vec3, k: usize, scene: Option<usize>) -> Result<Vec<usize>> {
        let mut cand: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| scene.is_none_or(|s| e.scene == s))
            .map(|(i, e)| (position_loss(&e.x, x), i))
            .collect();
        if k > cand.len() {
            return Err(invalid!(
                "requested {k} neighbors but the database holds only {}",
                cand.len()
            ));
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(cand.into_iter().take(k).map(|(_, i)| i).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let db: PoseDatabase = read_json(path)?;
        Self::new(db.entries).map_err(|e| Error::format(path, e))
    }
}

/// `w + ((1 - sum w) / k) 1`: the Euclidean projection onto `sum a = 1`.
pub fn project_affine(w: &[f64]) -> Vec<f64> {
    let shift = (1.0 - w.iter().sum::<f64>()) / w.len() as f64;
    w.iter().map(|v| v + shift).collect()
}

fn check_columns(z: &[f64], cols: &[Vec<f64>]) -> Result<()> {
    if cols.len() < 2 {
        return Err(invalid!("affine combination needs at least 2 columns"));
    }
    if let Some(c) = cols.iter().find(|c| c.len() != z.len()) {
        return Err(invalid!(
            "encoding length {} does not match query length {}",
            c.len(),
            z.len()
        ));
    }
    Ok(())
}

/// `||z - sum_i a_i c_i||`.
pub fn affine_objective(z: &[f64], cols: &[Vec<f64>], a: &[f64]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(r, zr)| {
            let fit: f64 = cols.iter().zip(a).map(|(c, ai)| ai * c[r]).sum();
            (zr - fit).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact minimizer of `||z - E a||` subject to `sum a = 1`, from the
/// bordered normal equations `[E'E + eps I, 1; 1', 0] [a; mu] = [E'z; 1]`.
pub fn closed_form_affine_weights(z: &[f64], cols: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_columns(z, cols)?;
    let k = cols.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
        }
        m[(i, i)] += KKT_DAMPING;
        m[(i, k)] = 1.0;
        m[(k, i)] = 1.0;
        rhs[i] = cols[i].iter().zip(z).map(|(a, b)| a * b).sum();
    }
    rhs[k] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("bordered least-squares system is singular".into()))?;
    let a: Vec<f64> = sol.iter().take(k).copied().collect();
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("closed-form affine weights are not finite".into()));
    }
    // remove the rounding drift of the solve so the constraint holds exactly
    Ok(project_affine(&a))
}

/// Result of one weight optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub weights: Vec<f64>,
    /// Objective at initialization and after every outer iteration.
    pub trace: Vec<f64>,
}

/// AdamW on unconstrained `w`, evaluating the objective at the projected
/// weights; starts from uniform weights. Returns the best iterate among the
/// outer-iteration boundaries.
pub fn iterative_affine_weights(z: &[f64], cols: &[Vec<f64>], cfg: &RefineConfig) -> Result<AffineFit> {
    check_columns(z, cols)?;
    cfg.validate()?;
    let k = cols.len();
    let n = z.len();
    // E' as [k, n] so that a [1,k] x E' gives the fitted row
    let et = Tensor::new(vec![k, n], cols.concat())?;
    let zt = Tensor::new(vec![1, n], z.to_vec())?;
    let mut params = ParamSet::new();
    params.push("w", Tensor::full(&[1, k], 1.0 / k as f64));
    let mut optim = OptimState::adamw(&params, cfg.lr, cfg.weight_decay);
    let mut best = project_affine(params.get(0).data());
    let mut trace = vec![affine_objective(z, cols, &best)];
    for _ in 0..cfg.outer {
        for _ in 0..cfg.inner {
            let grads = {
                let mut g = Graph::new();
                let ids = params.bind(&mut g);
                let w = ids[0];
                let mean = g.mean(w)?;
                let neg = g.negate(mean)?;
                let centered = g.add(w, neg)?;
                let offset = g.constant(Tensor::scalar(1.0 / k as f64));
                let a = g.add(centered, offset)?;
                let e = g.constant_ref(&et);
                let fit = g.matmul(a, e)?;
                let zn = g.constant_ref(&zt);
                let r = g.sub(zn, fit)?;
                let norm = g.l2norm(r)?;
                let loss = g.sum(norm)?;
                if !g.value(loss).item().is_finite() {
                    return Err(Error::Numerical(format!(
                        "refinement objective became non-finite; trace so far {trace:?}"
                    )));
                }
                let grads = g.backward(loss)?;
                params.collect_grads(&ids, &grads)
            };
            optim.step(&mut params, &grads)?;
        }
        // keep the best iterate seen at an outer boundary, so oscillation
        // around the optimum never makes the result worse
        let current = project_affine(params.get(0).data());
        let value = affine_objective(z, cols, &current);
        let last = *trace.last().expect("trace starts non-empty");
        if value <= last {
            best = current;
            trace.push(value);
        } else {
            trace.push(last);
        }
    }
    Ok(AffineFit { weights: best, trace })
}

/// Weights by the configured method.
pub fn affine_weights(z: &[f64], cols: &[Vec<f64>], cfg: &RefineConfig) -> Result<AffineFit> {
    if cfg.closed_form {
        let weights = closed_form_affine_weights(z, cols)?;
        let trace = vec![
            affine_objective(z, cols, &vec![1.0 / cols.len() as f64; cols.len()]),
            affine_objective(z, cols, &weights),
        ];
        Ok(AffineFit { weights, trace })
    } else {
        iterative_affine_weights(z, cols, cfg)
    }
}

/// `sum a_i x_i`.
pub fn combine_positions(positions: &[Vec3], a: &[f64]) -> Vec3 {
    let mut x = [0.0; 3];
    for (p, w) in positions.iter().zip(a) {
        for c in 0..3 {
            x[c] += w * p[c];
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    pub x: Vec3,
    pub neighbors: Vec<usize>,
    pub fit: AffineFit,
}

/// Refines the position for a query latent given neighbor entries of `db`.
pub fn refine_position(
    query: &LatentPair,
    neighbors: &[usize],
    db: &PoseDatabase,
    pae: &PaeModel,
    cfg: &RefineConfig,
) -> Result<Refined> {
    let poses: Vec<(Pose, usize)> = neighbors
        .iter()
        .map(|&i| (db.pose(i), db.entries()[i].scene))
        .collect();
    let cols: Vec<Vec<f64>> = pae.predict(&poses)?.iter().map(LatentPair::concat).collect();
    let fit = affine_weights(&query.concat(), &cols, cfg)?;
    let positions: Vec<Vec3> = poses.iter().map(|(p, _)| p.x).collect();
    Ok(Refined {
        x: combine_positions(&positions, &fit.weights),
        neighbors: neighbors.to_vec(),
        fit,
    })
}

/// Retrieves the `k` train poses nearest to `estimate` and refines.
pub fn refine_estimate(
    query: &LatentPair,
    estimate: &Vec3,
    scene: usize,
    db: &PoseDatabase,
    pae: &PaeModel,
    cfg: &RefineConfig,
) -> Result<Refined> {
    cfg.validate()?;
    let neighbors = db.knn(estimate, cfg.k, Some(scene))?;
    refine_position(query, &neighbors, db, pae, cfg)
}

/// Initial and refined position errors for one random-guess trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessTrial {
    pub initial_error: f64,
    pub refined_error: f64,
}

/// Perturbs the ground truth (Gaussian position noise of std `sigma` per
/// axis, orientation jitter of std `orientation_deg`), encodes the guess
/// with the PAE and refines it; no image is involved.
#[allow(clippy::too_many_arguments)]
pub fn refine_with_random_guess(
    gt: &Pose,
    scene: usize,
    sigma: f64,
    orientation_deg: f64,
    pae: &PaeModel,
    db: &PoseDatabase,
    cfg: &RefineConfig,
    seed: u64,
    trial: u64,
) -> Result<GuessTrial> {
    if !(sigma > 0.0) {
        return Err(invalid!("random-guess sigma must be positive"));
    }
    let mut rng = stream(seed, purpose::GUESS, trial);
    let noise: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
    let x = add3(&gt.x, &[sigma * noise[0], sigma * noise[1], sigma * noise[2]]);
    let q = quat_mul(&gt.q, &jitter_rotation(&mut rng, orientation_deg));
    let guess = Pose::new(x, q)?;
    let z = pae.forward(&guess, scene)?;
    let refined = refine_estimate(&z, &guess.x, scene, db, pae, cfg)?;
    Ok(GuessTrial {
        initial_error: position_loss(&guess.x, &gt.x),
        refined_error: position_loss(&refined.x, &gt.x),
    })
}

/// `normalize(sum a_i q_i)` after flipping every `q_i` into the hemisphere
/// of the first.
pub fn affine_orientation(quats: &[Quat], a: &[f64]) -> Result<Quat> {
    if quats.is_empty() || quats.len() != a.len() {
        return Err(invalid!("need one weight per quaternion"));
    }
    let first = quats[0];
    let mut sum = [0.0; 4];
    for (q, w) in quats.iter().zip(a) {
        let s = if dot4(q, &first) < 0.0 { -w } else { *w };
        for c in 0..4 {
            sum[c] += s * q[c];
        }
    }
    let n = norm4(&sum);
    if !(n >= 1e-9) {
        return Err(Error::Numerical(
            "affine orientation combination cancels out".into(),
        ));
    }
    Ok(canonical([sum[0] / n, sum[1] / n, sum[2] / n, sum[3] / n]))
}

/// Outcome of virtual relative pose regression for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualRpr {
    pub apr: Pose,
    pub reference: usize,
    pub pose: Pose,
}

/// APR estimate, nearest train pose, PAE encoding of that pose, decoded
/// reference image, then `x = x_ref + rpr(reference image, query image)`.
/// The orientation stays the APR's.
///
/// `rpr` receives the decoded reference image, the query image and the
/// reference pose and returns the world-frame offset `x_query - x_ref`.
pub fn virtual_rpr_refine<F>(
    query: &Image,
    scene: usize,
    apr: &AprModel,
    pae: &PaeModel,
    decoder: &DecoderModel,
    db: &PoseDatabase,
    rpr: F,
) -> Result<VirtualRpr>
where
    F: FnOnce(&Image, &Image, &Pose) -> Result<Vec3>,
{
    let (_, estimate) = apr.forward(query)?;
    let reference = db.knn(&estimate.x, 1, Some(scene))?[0];
    let ref_pose = db.pose(reference);
    let z = pae.forward(&ref_pose, scene)?;
    let decoded = decoder.decode(&[z])?.remove(0);
    let dx = rpr(&decoded, query, &ref_pose)?;
    if !dx.iter().all(|v| v.is_finite()) || !norm3(&dx).is_finite() {
        return Err(Error::Numerical("relative regressor returned a non-finite offset".into()));
    }
    Ok(VirtualRpr {
        apr: estimate,
        reference,
        pose: Pose {
            x: add3(&ref_pose.x, &dx),
            q: estimate.q,
        },
    })
}

/// Offset that an exact relative regressor would report for `truth`.
pub fn oracle_offset(truth: &Pose, reference: &Pose) -> Vec3 {
    sub3(&truth.x, &reference.x)
}
