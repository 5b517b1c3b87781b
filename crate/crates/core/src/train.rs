//! Mini-batch training loops for the four models.
//!
//! Every loop uses Adam with deterministic per-epoch shuffling and aborts
//! with the epoch and batch index as soon as a loss or gradient turns
//! non-finite.

use poseae_autodiff::{Graph, NodeId, OptimState, ParamSet, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::losses::{learnable_pose_loss_node, mean_row_distance, pose_loss_nodes, LatentPair};
use crate::models::{images_tensor, AprModel, DecoderModel, Model, ModelKind, PaeModel, RprModel};
use crate::nn::{stack_rows, Linear};
use crate::pose::{norm3, sub3, Pose};
use crate::rng::{purpose, stream};
use crate::scene::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Decoupled weight decay; zero selects plain Adam.
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first epoch down to `lr / 100` at the last.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = if epochs > 1 { epoch as f64 / (epochs - 1) as f64 } else { 0.0 };
                let floor = base / 100.0;
                floor + (base - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// One line of `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub model: ModelKind,
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub loss: f64,
    /// Mean latent-matching term (PAE only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latent_loss: Option<f64>,
}

/// A trained model with its optimizer state and loss curve.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub optim: OptimState,
    pub log: Vec<EpochLog>,
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(invalid!("training needs batch_size >= 1 and lr > 0"));
    }
    Ok(())
}

/// Shuffled mini-batches of `0..n` for one epoch.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, kind: ModelKind, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, purpose::SHUFFLE, ((kind as u64) << 32) | epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Rows `idx` of a `[n, w]` tensor.
pub fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let w = t.last_dim();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::new(vec![idx.len(), w], data).expect("row gather keeps shape")
}

fn pose_tensors(samples: &[&Sample]) -> (Tensor, Tensor) {
    let xs = samples.iter().flat_map(|s| s.pose.x).collect();
    let qs = samples.iter().flat_map(|s| s.pose.q).collect();
    (
        Tensor::new(vec![samples.len(), 3], xs).expect("3 per pose"),
        Tensor::new(vec![samples.len(), 4], qs).expect("4 per pose"),
    )
}

fn numerical(kind: ModelKind, epoch: usize, batch: usize, e: impl std::fmt::Display) -> Error {
    Error::Numerical(format!(
        "{} training diverged at epoch {epoch}, batch {batch}: {e}",
        kind.file_stem()
    ))
}

/// Runs the shared epoch/batch loop. `batch_loss` builds the objective for
/// the given epoch and sample indices and returns `(loss, optional latent term)`.
fn run<M: Model, F>(
    mut model: M,
    n: usize,
    cfg: &TrainConfig,
    mut batch_loss: F,
) -> Result<Trained<M>>
where
    F: FnMut(&M, &mut Graph<'_>, &[NodeId], usize, &[usize]) -> Result<(NodeId, Option<NodeId>)>,
{
    check_config(cfg)?;
    let kind = M::KIND;
    let mut optim = if cfg.weight_decay > 0.0 {
        OptimState::adamw(model.params(), cfg.lr, cfg.weight_decay)
    } else {
        OptimState::adam(model.params(), cfg.lr)
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        optim.lr = cfg.schedule.lr_at(cfg.lr, epoch, cfg.epochs);
        let (mut total, mut latent_total, mut count) = (0.0, 0.0, 0usize);
        let mut has_latent = false;
        for (bi, idx) in epoch_batches(n, cfg.batch_size, cfg.seed, kind, epoch).iter().enumerate() {
            let grads = {
                let mut g = Graph::new();
                let ids = model.params().bind(&mut g);
                let (loss, latent) =
                    batch_loss(&model, &mut g, &ids, epoch, idx).map_err(|e| wrap(kind, epoch, bi, e))?;
                let lv = g.value(loss).item();
                if !lv.is_finite() {
                    return Err(numerical(kind, epoch, bi, "non-finite loss"));
                }
                total += lv * idx.len() as f64;
                if let Some(l) = latent {
                    has_latent = true;
                    latent_total += g.value(l).item() * idx.len() as f64;
                }
                count += idx.len();
                let grads = g.backward(loss).map_err(|e| numerical(kind, epoch, bi, e))?;
                model.params().collect_grads(&ids, &grads)
            };
            optim
                .step(model.params_mut(), &grads)
                .map_err(|e| numerical(kind, epoch, bi, e))?;
        }
        log.push(EpochLog {
            model: kind,
            epoch,
            loss: total / count.max(1) as f64,
            latent_loss: has_latent.then(|| latent_total / count.max(1) as f64),
        });
    }
    Ok(Trained { model, optim, log })
}

fn wrap(kind: ModelKind, epoch: usize, batch: usize, e: Error) -> Error {
    if e.is_numerical() {
        numerical(kind, epoch, batch, e)
    } else {
        e
    }
}

/// Teacher training: the learnable pose loss on the regressed poses.
pub fn train_apr(ds: &Dataset, model: AprModel, cfg: &TrainConfig) -> Result<Trained<AprModel>> {
    if ds.train.is_empty() {
        return Err(invalid!("cannot train on an empty dataset"));
    }
    let images: Vec<&Image> = ds.train.iter().map(|s| &s.image).collect();
    let all = images_tensor(&images, model.resolution())?;
    let refs: Vec<&Sample> = ds.train.iter().collect();
    let (xs, qs) = pose_tensors(&refs);
    run(model, ds.train.len(), cfg, |m, g, ids, _, idx| {
        let loss = apr_objective(
            m,
            g,
            ids,
            gather_rows(&all, idx),
            gather_rows(&xs, idx),
            gather_rows(&qs, idx),
        )?;
        Ok((loss, None))
    })
}

/// Teacher objective for one batch: images `[b,3HW]`, positions `[b,3]`,
/// unit quaternions `[b,4]`.
pub fn apr_objective(
    m: &AprModel,
    g: &mut Graph<'_>,
    ids: &[NodeId],
    images: Tensor,
    xs: Tensor,
    qs: Tensor,
) -> Result<NodeId> {
    let xi = g.constant(images);
    let (zx, zq) = m.encode(g, ids, xi)?;
    let (x, q) = m.regress(g, ids, zx, zq)?;
    let xg = g.constant(xs);
    let qg = g.constant(qs);
    let (lx, lq) = pose_loss_nodes(g, x, q, xg, qg)?;
    learnable_pose_loss_node(g, lx, lq, ids[m.s_x], ids[m.s_q])
}

/// Teacher latents for every sample, computed once with frozen weights.
pub fn teacher_latents(teacher: &AprModel, samples: &[Sample]) -> Result<(Tensor, Tensor)> {
    let mut zx = Vec::new();
    let mut zq = Vec::new();
    for chunk in samples.chunks(256) {
        let images: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        for (z, _) in teacher.predict(&images)? {
            zx.extend(z.zx);
            zq.extend(z.zq);
        }
    }
    let d = teacher.latent_dim();
    Ok((
        Tensor::new(vec![samples.len(), d], zx)?,
        Tensor::new(vec![samples.len(), d], zq)?,
    ))
}

fn pae_inputs(pae: &PaeModel, samples: &[Sample]) -> Result<(Tensor, Tensor)> {
    let poses: Vec<(Pose, usize)> = samples.iter().map(|s| (s.pose, s.scene)).collect();
    pae.inputs(&poses)
}

/// `x W + b` with the layer's weights copied in as constants.
fn frozen_linear(g: &mut Graph<'_>, params: &ParamSet, l: &Linear, x: NodeId) -> Result<NodeId> {
    let w = g.constant(params.get(l.weight).clone());
    let b = g.constant(params.get(l.bias).clone());
    let z = g.matmul(x, w)?;
    Ok(g.add(z, b)?)
}

/// Student distillation. The teacher is only read: its latents are
/// precomputed and its heads and loss weights enter the graph as constants.
pub fn train_pae(
    ds: &Dataset,
    teacher: &AprModel,
    model: PaeModel,
    cfg: &TrainConfig,
) -> Result<Trained<PaeModel>> {
    if teacher.latent_dim() != model.latent_dim() {
        return Err(invalid!(
            "PAE latent dimension {} does not match the teacher's {}",
            model.latent_dim(),
            teacher.latent_dim()
        ));
    }
    if model.config().n_scenes < ds.n_scenes() {
        return Err(invalid!(
            "PAE configured for {} scene(s) but the dataset has {}",
            model.config().n_scenes,
            ds.n_scenes()
        ));
    }
    if ds.train.is_empty() {
        return Err(invalid!("cannot train on an empty dataset"));
    }
    let (tzx, tzq) = teacher_latents(teacher, &ds.train)?;
    let (xin, qin) = pae_inputs(&model, &ds.train)?;
    let refs: Vec<&Sample> = ds.train.iter().collect();
    let (xs, qs) = pose_tensors(&refs);
    run(model, ds.train.len(), cfg, |m, g, ids, _, idx| {
        let batch = PaeBatch {
            x_in: gather_rows(&xin, idx),
            q_in: gather_rows(&qin, idx),
            teacher_zx: gather_rows(&tzx, idx),
            teacher_zq: gather_rows(&tzq, idx),
            xs: gather_rows(&xs, idx),
            qs: gather_rows(&qs, idx),
        };
        let (loss, latent) = pae_objective(m, teacher, g, ids, batch)?;
        Ok((loss, Some(latent)))
    })
}

/// One distillation batch: encoder inputs, teacher latents and poses.
pub struct PaeBatch {
    pub x_in: Tensor,
    pub q_in: Tensor,
    pub teacher_zx: Tensor,
    pub teacher_zq: Tensor,
    pub xs: Tensor,
    pub qs: Tensor,
}

/// Distillation objective for one batch; returns `(total, latent terms)`.
pub fn pae_objective(
    m: &PaeModel,
    teacher: &AprModel,
    g: &mut Graph<'_>,
    ids: &[NodeId],
    batch: PaeBatch,
) -> Result<(NodeId, NodeId)> {
    let tparams = teacher.params();
    let xi = g.constant(batch.x_in);
    let qi = g.constant(batch.q_in);
    let (zx, zq) = m.encode(g, ids, xi, qi)?;
    let tx = g.constant(batch.teacher_zx);
    let tq = g.constant(batch.teacher_zq);
    let lzx = mean_row_distance(g, zx, tx)?;
    let lzq = mean_row_distance(g, zq, tq)?;
    let latent = g.add(lzx, lzq)?;
    let x = frozen_linear(g, tparams, &teacher.head_x, zx)?;
    let q = frozen_linear(g, tparams, &teacher.head_q, zq)?;
    let xg = g.constant(batch.xs);
    let qg = g.constant(batch.qs);
    let (lx, lq) = pose_loss_nodes(g, x, q, xg, qg)?;
    let s_x = g.constant(tparams.get(teacher.s_x).clone());
    let s_q = g.constant(tparams.get(teacher.s_q).clone());
    let lp = learnable_pose_loss_node(g, lx, lq, s_x, s_q)?;
    Ok((g.add(latent, lp)?, latent))
}

/// Decoder inputs for the given poses from a frozen PAE.
pub fn decoder_inputs(decoder: &DecoderModel, pae: &PaeModel, poses: &[(Pose, usize)]) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(poses.len());
    for chunk in poses.chunks(256) {
        for z in pae.predict(chunk)? {
            rows.push(decoder.combine(&z)?);
        }
    }
    stack_rows(&rows)
}

/// Mean absolute error of decoded (clamped) images against renders.
pub fn decoder_l1(decoder: &DecoderModel, pae: &PaeModel, samples: &[Sample]) -> Result<f64> {
    let poses: Vec<(Pose, usize)> = samples.iter().map(|s| (s.pose, s.scene)).collect();
    let latents: Vec<LatentPair> = pae.predict(&poses)?;
    let mut total = 0.0;
    for (chunk, zs) in samples.chunks(64).zip(latents.chunks(64)) {
        for (s, img) in chunk.iter().zip(decoder.decode(zs)?) {
            total += img.l1(&s.image);
        }
    }
    Ok(total / samples.len() as f64)
}

/// Image decoder on frozen PAE encodings, mean absolute error objective.
pub fn train_decoder(
    ds: &Dataset,
    pae: &PaeModel,
    model: DecoderModel,
    cfg: &TrainConfig,
) -> Result<Trained<DecoderModel>> {
    if model.resolution() != ds.resolution() {
        return Err(invalid!(
            "decoder resolution {} does not match dataset resolution {}",
            model.resolution(),
            ds.resolution()
        ));
    }
    if ds.train.is_empty() {
        return Err(invalid!("cannot train on an empty dataset"));
    }
    let poses: Vec<(Pose, usize)> = ds.train.iter().map(|s| (s.pose, s.scene)).collect();
    let inputs = decoder_inputs(&model, pae, &poses)?;
    let images: Vec<&Image> = ds.train.iter().map(|s| &s.image).collect();
    let targets = images_tensor(&images, ds.resolution())?;
    run(model, ds.train.len(), cfg, |m, g, ids, _, idx| {
        let loss = decoder_objective(m, g, ids, gather_rows(&inputs, idx), gather_rows(&targets, idx))?;
        Ok((loss, None))
    })
}

/// Mean absolute error between raw decoder output and target images.
pub fn decoder_objective(
    m: &DecoderModel,
    g: &mut Graph<'_>,
    ids: &[NodeId],
    inputs: Tensor,
    targets: Tensor,
) -> Result<NodeId> {
    let xi = g.constant(inputs);
    let out = m.forward_raw(g, ids, xi)?;
    let t = g.constant(targets);
    Ok(g.l1loss(out, t)?)
}

/// For every sample, the indices of the `m` closest other samples of the
/// same scene (nearest first, ties by index). `m = 0` lists the whole scene.
pub fn neighbor_lists(samples: &[Sample], m: usize) -> Vec<Vec<usize>> {
    (0..samples.len())
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = samples
                .iter()
                .enumerate()
                .filter(|(j, s)| *j != i && s.scene == samples[i].scene)
                .map(|(j, s)| (norm3(&sub3(&s.pose.x, &samples[i].pose.x)), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if m > 0 {
                cand.truncate(m);
            }
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// How relative-regression training pairs are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RprPairing {
    /// The random half of the pairs draws the partner among this many
    /// nearest samples; 0 draws from the whole scene.
    pub local_neighbors: usize,
    /// Feed the reference side of each pair as the image decoded from its
    /// pose instead of the rendered one, matching how references are
    /// produced at test time.
    pub decoded_references: bool,
}

impl Default for RprPairing {
    fn default() -> Self {
        Self {
            local_neighbors: 16,
            decoded_references: true,
        }
    }
}

/// Training pairs `(reference, query)` for one epoch: each anchor is the
/// reference of one pair whose query is, with equal probability, its
/// nearest neighbor or a random neighbor from `lists`.
pub fn rpr_pairs(lists: &[Vec<usize>], seed: u64, epoch: usize) -> Vec<(usize, usize)> {
    let mut rng = stream(seed, purpose::PAIRS, epoch as u64);
    lists
        .iter()
        .enumerate()
        .map(|(a, list)| {
            let b = if list.is_empty() {
                a
            } else if rng.random::<bool>() {
                list[0]
            } else {
                list[rng.random_range(0..list.len())]
            };
            (a, b)
        })
        .collect()
}

/// Siamese relative regressor on pairs of train samples, target
/// `x_b - x_a` in the world frame. `references`, when given, replaces the
/// first image of each pair (`[n, 3HW]`, one row per train sample).
pub fn train_rpr(
    ds: &Dataset,
    model: RprModel,
    cfg: &TrainConfig,
    pairing: &RprPairing,
    references: Option<&Tensor>,
) -> Result<Trained<RprModel>> {
    if ds.train.len() < 2 {
        return Err(invalid!("relative regression needs at least 2 train samples"));
    }
    let images: Vec<&Image> = ds.train.iter().map(|s| &s.image).collect();
    let all = images_tensor(&images, model.resolution())?;
    if let Some(r) = references {
        if r.shape() != all.shape() {
            return Err(invalid!(
                "reference images {:?} do not match the train split {:?}",
                r.shape(),
                all.shape()
            ));
        }
    }
    let refs = references.unwrap_or(&all);
    let lists = neighbor_lists(&ds.train, pairing.local_neighbors);
    let mut pairs: (usize, Vec<(usize, usize)>) = (usize::MAX, Vec::new());
    run(model, ds.train.len(), cfg, |m, g, ids, epoch, idx| {
        if pairs.0 != epoch {
            pairs = (epoch, rpr_pairs(&lists, cfg.seed, epoch));
        }
        let pairs = &pairs.1;
        let a: Vec<usize> = idx.iter().map(|&i| pairs[i].0).collect();
        let b: Vec<usize> = idx.iter().map(|&i| pairs[i].1).collect();
        let target: Vec<f64> = idx
            .iter()
            .flat_map(|&i| {
                let (a, b) = pairs[i];
                sub3(&ds.train[b].pose.x, &ds.train[a].pose.x)
            })
            .collect();
        let loss = rpr_objective(
            m,
            g,
            ids,
            gather_rows(refs, &a),
            gather_rows(&all, &b),
            Tensor::new(vec![idx.len(), 3], target)?,
        )?;
        Ok((loss, None))
    })
}

/// Mean distance between predicted and true offsets `x_b - x_a`.
pub fn rpr_objective(
    m: &RprModel,
    g: &mut Graph<'_>,
    ids: &[NodeId],
    a: Tensor,
    b: Tensor,
    offsets: Tensor,
) -> Result<NodeId> {
    let ai = g.constant(a);
    let bi = g.constant(b);
    let pred = m.forward(g, ids, ai, bi)?;
    let t = g.constant(offsets);
    mean_row_distance(g, pred, t)
}

/// Clamped decoder output for every train pose, as a `[n, 3HW]` tensor.
pub fn decoded_train_images(ds: &Dataset, pae: &PaeModel, decoder: &DecoderModel) -> Result<Tensor> {
    let poses: Vec<(Pose, usize)> = ds.train.iter().map(|s| (s.pose, s.scene)).collect();
    let mut images = Vec::with_capacity(poses.len());
    for chunk in poses.chunks(64) {
        images.extend(decoder.decode(&pae.predict(chunk)?)?);
    }
    let refs: Vec<&Image> = images.iter().collect();
    images_tensor(&refs, ds.resolution())
}

/// Copy of a parameter set, used to verify that frozen models stay intact.
pub fn snapshot(params: &ParamSet) -> Vec<Vec<u8>> {
    params
        .tensors()
        .iter()
        .map(|t| t.data().iter().flat_map(|v| v.to_le_bytes()).collect())
        .collect()
}
