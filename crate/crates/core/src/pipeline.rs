//! Run-directory orchestration: each stage reads its prerequisites from
//! `<output_dir>/<name>/`, checks that they were produced under the current
//! configuration, and writes its own artifacts and report next to them.
//!
//! Layout of a run directory:
//!
//! ```text
//! dataset/               images, poses and scene metadata
//! poses.db.json          train poses used for retrieval
//! apr.ckpt pae.ckpt decoder.ckpt rpr.ckpt
//! <stage>.log.jsonl      one line per training epoch of that checkpoint
//! ablation/L<l>/pae.ckpt Fourier-level sweep students (+ pae.log.jsonl)
//! reports/<exp>.json     per-experiment reports (+ .txt, + .timing.json)
//! report.json report.txt summary of every report present
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{digest_of, Checkpoint};
use crate::config::{RunConfig, Stage};
use crate::dataset::{min_split_distance, write_json, Dataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::metrics::median;
use crate::models::{AprModel, DecoderModel, Model, PaeModel, RprModel};
use crate::pose::{add3, angular_error_deg, position_loss, Pose, Vec3};
use crate::refine::{
    affine_orientation, oracle_offset, refine_estimate, refine_with_random_guess, virtual_rpr_refine,
    PoseDatabase,
};
use crate::report::{Report, Timing};
use crate::rng::{purpose, stream};
use crate::scene::render;
use crate::train::{
    decoded_train_images, decoder_l1, train_apr, train_decoder, train_pae, train_rpr, EpochLog, Trained,
};

/// Order in which experiment reports appear in the summary.
pub const EXPERIMENTS: [&str; 12] = [
    "gen-scene",
    "train-apr",
    "train-pae",
    "train-decoder",
    "train-rpr",
    "eval",
    "refine",
    "refine-random-guess",
    "virtual-rpr",
    "ablate-fourier",
    "orientation-affine",
    "decoder-probe",
];

/// `report.json`: every experiment report found in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub config_digest: String,
    pub experiments: Vec<Report>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    config_digest: &'a str,
    #[serde(flatten)]
    entry: &'a EpochLog,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    /// Accept artifacts whose recorded configuration differs from `cfg`.
    pub force: bool,
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Dataset => "dataset",
        Stage::Apr => "apr",
        Stage::Pae => "pae",
        Stage::Decoder => "decoder",
        Stage::Rpr => "rpr",
    }
}

fn stage_command(stage: Stage) -> &'static str {
    match stage {
        Stage::Dataset => "gen-scene",
        Stage::Apr => "train-apr",
        Stage::Pae => "train-pae",
        Stage::Decoder => "train-decoder",
        Stage::Rpr => "train-rpr",
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Per-scene medians of each column plus a `mean` row averaging the
/// scene medians; `derive` appends computed columns to every row.
fn push_scene_rows(
    report: &mut Report,
    n_scenes: usize,
    scenes: &[usize],
    columns: &[Vec<f64>],
    derive: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<()> {
    let mut per_scene = Vec::with_capacity(n_scenes);
    for s in 0..n_scenes {
        let row = columns
            .iter()
            .map(|col| {
                let vals: Vec<f64> = col
                    .iter()
                    .zip(scenes)
                    .filter(|(_, sc)| **sc == s)
                    .map(|(v, _)| *v)
                    .collect();
                median(&vals)
            })
            .collect::<Result<Vec<f64>>>()?;
        per_scene.push(row);
    }
    let mean: Vec<f64> = (0..columns.len())
        .map(|c| per_scene.iter().map(|r| r[c]).sum::<f64>() / n_scenes as f64)
        .collect();
    for (s, mut row) in per_scene.into_iter().enumerate() {
        let extra = derive(&row);
        row.extend(extra);
        report.push(format!("scene {s}"), row)?;
    }
    let mut row = mean;
    let extra = derive(&row);
    row.extend(extra);
    report.push("mean", row)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::NAN
    }
}

impl Pipeline {
    pub fn new(cfg: RunConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.run_dir();
        Ok(Self { cfg, dir, force })
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dir.join("dataset")
    }

    pub fn db_path(&self) -> PathBuf {
        self.dir.join("poses.db.json")
    }

    pub fn checkpoint_path(&self, stage: Stage) -> PathBuf {
        self.dir.join(format!("{}.ckpt", stage_name(stage)))
    }

    /// Training log written next to a checkpoint; replaced when the
    /// checkpoint is, so re-running a stage reproduces it byte for byte.
    pub fn log_path(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("log.jsonl")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.dir.join("reports")
    }

    pub fn report_path(&self, experiment: &str) -> PathBuf {
        self.reports_dir().join(format!("{experiment}.json"))
    }

    pub fn timing_path(&self, experiment: &str) -> PathBuf {
        self.reports_dir().join(format!("{experiment}.timing.json"))
    }

    fn ablation_path(&self, levels: usize) -> PathBuf {
        self.dir.join("ablation").join(format!("L{levels}")).join("pae.ckpt")
    }

    fn check_digest(&self, what: &str, expected: String, found: &str) -> Result<()> {
        if found != expected && !self.force {
            return Err(Error::DigestMismatch {
                what: what.to_string(),
                expected,
                found: found.to_string(),
            });
        }
        Ok(())
    }

    fn missing(&self, stage: Stage, path: &Path) -> Error {
        Error::Missing(format!(
            "{} not found at {} (run `{}` first)",
            stage_name(stage),
            path.display(),
            stage_command(stage)
        ))
    }

    // ---- artifacts -------------------------------------------------------

    pub fn dataset(&self) -> Result<Dataset> {
        let dir = self.dataset_dir();
        if !dir.join("meta.json").exists() {
            return Err(self.missing(Stage::Dataset, &dir));
        }
        let ds = Dataset::load(&dir)?;
        self.check_digest(
            "dataset",
            self.cfg.stage_digest(Stage::Dataset),
            &digest_of(&("dataset", &ds.config)),
        )?;
        Ok(ds)
    }

    pub fn database(&self) -> Result<PoseDatabase> {
        let path = self.db_path();
        if !path.exists() {
            return Err(self.missing(Stage::Dataset, &path));
        }
        PoseDatabase::load(&path)
    }

    fn load_at<M: Model>(&self, stage: Stage, path: &Path, expected: String) -> Result<M> {
        if !path.exists() {
            return Err(self.missing(stage, path));
        }
        let ck = Checkpoint::load(path)?;
        self.check_digest(&format!("{} checkpoint", stage_name(stage)), expected, &ck.config_digest)?;
        ck.to_model()
    }

    pub fn load<M: Model>(&self, stage: Stage) -> Result<M> {
        self.load_at(stage, &self.checkpoint_path(stage), self.cfg.stage_digest(stage))
    }

    fn save_trained<M: Model>(&self, path: &Path, trained: &Trained<M>, digest: String, cfg: &RunConfig) -> Result<()> {
        let mut ck = Checkpoint::new(&trained.model, Some(&trained.optim), &digest, trained.log.len());
        ck.run_config = Some(serde_json::to_value(cfg).expect("config serializes"));
        ck.save(path)?;
        let mut text = String::new();
        for entry in &trained.log {
            let line = LogLine { config_digest: &digest, entry };
            text.push_str(&serde_json::to_string(&line).expect("log serializes"));
            text.push('\n');
        }
        let log = Self::log_path(path);
        fs::write(&log, text).map_err(|e| Error::io(&log, e))
    }

    fn save_report(&self, report: &Report) -> Result<()> {
        report.save(&self.reports_dir()).map(|_| ())
    }

    fn training_report(&self, experiment: &str, log: &[EpochLog], extra: &[(&str, f64)]) -> Result<Report> {
        let mut cols = vec!["epochs", "final_loss"];
        cols.extend(extra.iter().map(|(c, _)| *c));
        let mut r = Report::new(experiment, &self.cfg, &cols);
        let mut row = vec![log.len() as f64, log.last().map_or(f64::NAN, |l| l.loss)];
        row.extend(extra.iter().map(|(_, v)| *v));
        r.push("all", row)?;
        self.save_report(&r)?;
        Ok(r)
    }

    // ---- stages ----------------------------------------------------------

    pub fn gen_scene(&self) -> Result<Report> {
        let ds = Dataset::build(&self.cfg.dataset, self.cfg.refine.k)?;
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        ds.save(&self.dataset_dir())?;
        PoseDatabase::from_samples(&ds.train).save(&self.db_path())?;
        let mut r = Report::new("gen-scene", &self.cfg, &["train", "test", "min_split_distance_m"]);
        for s in 0..ds.n_scenes() {
            let train: Vec<Sample> = ds.train.iter().filter(|x| x.scene == s).cloned().collect();
            let test: Vec<Sample> = ds.test.iter().filter(|x| x.scene == s).cloned().collect();
            r.push(
                format!("scene {s}"),
                vec![train.len() as f64, test.len() as f64, min_split_distance(&train, &test)],
            )?;
        }
        self.save_report(&r)?;
        Ok(r)
    }

    /// Mean train position, used as the regressor's initial output bias.
    pub fn position_prior(ds: &Dataset) -> Vec3 {
        let n = ds.train.len().max(1) as f64;
        let mut p = [0.0; 3];
        for s in &ds.train {
            for c in 0..3 {
                p[c] += s.pose.x[c] / n;
            }
        }
        p
    }

    pub fn train_apr(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let model = AprModel::from_config(&self.cfg.apr_config(Self::position_prior(&ds)))?;
        let trained = train_apr(&ds, model, &self.cfg.training.apr)?;
        self.save_trained(&self.checkpoint_path(Stage::Apr), &trained, self.cfg.stage_digest(Stage::Apr), &self.cfg)?;
        let w = trained.model.loss_weights();
        let median_pos = |samples: &[Sample]| -> Result<f64> {
            let est = Self::apr_estimates(&trained.model, samples)?;
            median(&est.iter().zip(samples).map(|((_, p), s)| position_loss(&p.x, &s.pose.x)).collect::<Vec<_>>())
        };
        let (train_pos, test_pos) = (median_pos(&ds.train)?, median_pos(&ds.test)?);
        self.training_report(
            "train-apr",
            &trained.log,
            &[("s_x", w.s_x), ("s_q", w.s_q), ("train_pos_m", train_pos), ("test_pos_m", test_pos)],
        )
    }

    fn fit_pae(&self, cfg: &RunConfig, ds: &Dataset, teacher: &AprModel) -> Result<Trained<PaeModel>> {
        let model = PaeModel::from_config(&cfg.pae_config())?;
        train_pae(ds, teacher, model, &cfg.training.pae)
    }

    pub fn train_pae(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let teacher: AprModel = self.load(Stage::Apr)?;
        let trained = self.fit_pae(&self.cfg, &ds, &teacher)?;
        self.save_trained(&self.checkpoint_path(Stage::Pae), &trained, self.cfg.stage_digest(Stage::Pae), &self.cfg)?;
        let latent = trained.log.last().and_then(|l| l.latent_loss).unwrap_or(f64::NAN);
        self.training_report("train-pae", &trained.log, &[("final_latent_loss", latent)])
    }

    pub fn train_decoder(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let model = DecoderModel::from_config(&self.cfg.decoder_config())?;
        let baseline = decoder_l1(&model, &pae, &ds.test)?;
        let trained = train_decoder(&ds, &pae, model, &self.cfg.training.decoder)?;
        self.save_trained(
            &self.checkpoint_path(Stage::Decoder),
            &trained,
            self.cfg.stage_digest(Stage::Decoder),
            &self.cfg,
        )?;
        let l1 = decoder_l1(&trained.model, &pae, &ds.test)?;
        self.training_report(
            "train-decoder",
            &trained.log,
            &[("untrained_test_l1", baseline), ("test_l1", l1), ("l1_ratio", ratio(l1, baseline))],
        )
    }

    pub fn train_rpr(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let pairing = &self.cfg.training.rpr_pairing;
        let references = if pairing.decoded_references {
            let pae: PaeModel = self.load(Stage::Pae)?;
            let decoder: DecoderModel = self.load(Stage::Decoder)?;
            Some(decoded_train_images(&ds, &pae, &decoder)?)
        } else {
            None
        };
        let model = RprModel::from_config(&self.cfg.rpr_config())?;
        let trained = train_rpr(&ds, model, &self.cfg.training.rpr, pairing, references.as_ref())?;
        self.save_trained(&self.checkpoint_path(Stage::Rpr), &trained, self.cfg.stage_digest(Stage::Rpr), &self.cfg)?;
        // held-out pairs: each test image against its nearest train render;
        // predicting a zero offset would score `mean_offset_m`
        let db = PoseDatabase::from_samples(&ds.train);
        let (mut err, mut offsets) = (Vec::new(), Vec::new());
        for s in &ds.test {
            let r = &ds.train[db.knn(&s.pose.x, 1, Some(s.scene))?[0]];
            let truth = oracle_offset(&s.pose, &r.pose);
            let dx = trained.model.predict(&[(&r.image, &s.image)])?[0];
            err.push(position_loss(&dx, &truth));
            offsets.push(crate::pose::norm3(&truth));
        }
        let mean_offset = offsets.iter().sum::<f64>() / offsets.len().max(1) as f64;
        self.training_report(
            "train-rpr",
            &trained.log,
            &[("heldout_offset_err_m", median(&err)?), ("mean_offset_m", mean_offset)],
        )
    }

    // ---- experiments -----------------------------------------------------

    fn apr_estimates(apr: &AprModel, samples: &[Sample]) -> Result<Vec<(crate::losses::LatentPair, Pose)>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(128) {
            let images: Vec<_> = chunk.iter().map(|s| &s.image).collect();
            out.extend(apr.predict(&images)?);
        }
        Ok(out)
    }

    fn student_errors(pae: &PaeModel, teacher: &AprModel, samples: &[Sample]) -> Result<(Vec<f64>, Vec<f64>)> {
        let poses: Vec<(Pose, usize)> = samples.iter().map(|s| (s.pose, s.scene)).collect();
        let (mut pos, mut ori) = (Vec::new(), Vec::new());
        for (z, s) in pae.predict(&poses)?.iter().zip(samples) {
            let p = teacher.decode_latents(z)?;
            pos.push(position_loss(&p.x, &s.pose.x));
            ori.push(angular_error_deg(&p.q, &s.pose.q));
        }
        Ok((pos, ori))
    }

    /// Teacher regressor vs student encoder decoded through the teacher heads.
    pub fn eval(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let apr: AprModel = self.load(Stage::Apr)?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let (mut tp, mut to) = (Vec::new(), Vec::new());
        for ((_, p), s) in Self::apr_estimates(&apr, &ds.test)?.iter().zip(&ds.test) {
            tp.push(position_loss(&p.x, &s.pose.x));
            to.push(angular_error_deg(&p.q, &s.pose.q));
        }
        let (sp, so) = Self::student_errors(&pae, &apr, &ds.test)?;
        let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
        let mut r = Report::new(
            "eval",
            &self.cfg,
            &["teacher_pos_m", "teacher_ori_deg", "student_pos_m", "student_ori_deg", "pos_ratio", "ori_ratio"],
        );
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[tp, to, sp, so], |v| {
            vec![ratio(v[2], v[0]), ratio(v[3], v[1])]
        })?;
        self.save_report(&r)?;
        Ok(r)
    }

    /// Test-time affine refinement of the teacher's position estimates.
    pub fn refine(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let db = self.database()?;
        let apr: AprModel = self.load(Stage::Apr)?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let (mut before, mut after, mut ori) = (Vec::new(), Vec::new(), Vec::new());
        let (mut t_apr, mut t_refine) = (Vec::new(), Vec::new());
        for s in &ds.test {
            let t = Instant::now();
            let (z, p) = apr.forward(&s.image)?;
            t_apr.push(elapsed_ms(t));
            let t = Instant::now();
            let refined = refine_estimate(&z, &p.x, s.scene, &db, &pae, &self.cfg.refine)?;
            t_refine.push(elapsed_ms(t));
            before.push(position_loss(&p.x, &s.pose.x));
            after.push(position_loss(&refined.x, &s.pose.x));
            ori.push(angular_error_deg(&p.q, &s.pose.q));
        }
        let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
        let mut r = Report::new(
            "refine",
            &self.cfg,
            &["apr_pos_m", "refined_pos_m", "ori_deg", "pos_ratio"],
        );
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[before, after, ori], |v| vec![ratio(v[1], v[0])])?;
        self.save_report(&r)?;
        Timing {
            experiment: "refine".into(),
            queries: ds.test.len(),
            median_ms: vec![("apr".into(), median(&t_apr)?), ("refine".into(), median(&t_refine)?)],
        }
        .save(&self.reports_dir())?;
        Ok(r)
    }

    fn guess_trials(&self, ds: &Dataset, db: &PoseDatabase, pae: &PaeModel) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let e = &self.cfg.experiments;
        let sigma = e.guess_sigma_fraction * ds.extent();
        let (mut scenes, mut init, mut fin) = (Vec::new(), Vec::new(), Vec::new());
        for trial in 0..e.guess_trials.max(ds.test.len()) {
            let s = &ds.test[trial % ds.test.len()];
            let g = refine_with_random_guess(
                &s.pose,
                s.scene,
                sigma,
                e.guess_orientation_deg,
                pae,
                db,
                &self.cfg.refine,
                e.guess_seed,
                trial as u64,
            )?;
            scenes.push(s.scene);
            init.push(g.initial_error);
            fin.push(g.refined_error);
        }
        Ok((scenes, init, fin))
    }

    /// Image-free refinement of noisy guesses around the ground truth.
    pub fn refine_random_guess(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let db = self.database()?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let (scenes, init, fin) = self.guess_trials(&ds, &db, &pae)?;
        let mut r = Report::new("refine-random-guess", &self.cfg, &["initial_pos_m", "refined_pos_m", "ratio"]);
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[init, fin], |v| vec![ratio(v[1], v[0])])?;
        r.notes.push(format!("{} trials", scenes.len()));
        self.save_report(&r)?;
        Ok(r)
    }

    /// Relative regression against images decoded from retrieved poses;
    /// the `oracle` column substitutes the exact offset for the regressor.
    pub fn virtual_rpr(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let db = self.database()?;
        let apr: AprModel = self.load(Stage::Apr)?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let decoder: DecoderModel = self.load(Stage::Decoder)?;
        let rpr: RprModel = self.load(Stage::Rpr)?;
        let (mut apr_pos, mut ori, mut refined, mut oracle, mut times) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for s in &ds.test {
            let t = Instant::now();
            let v = virtual_rpr_refine(&s.image, s.scene, &apr, &pae, &decoder, &db, |r, q, _| {
                Ok(rpr.predict(&[(r, q)])?[0])
            })?;
            times.push(elapsed_ms(t));
            let o = virtual_rpr_refine(&s.image, s.scene, &apr, &pae, &decoder, &db, |_, _, reference| {
                Ok(oracle_offset(&s.pose, reference))
            })?;
            apr_pos.push(position_loss(&v.apr.x, &s.pose.x));
            ori.push(angular_error_deg(&v.pose.q, &s.pose.q));
            refined.push(position_loss(&v.pose.x, &s.pose.x));
            oracle.push(position_loss(&o.pose.x, &s.pose.x));
        }
        let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
        let mut r = Report::new(
            "virtual-rpr",
            &self.cfg,
            &["apr_pos_m", "refined_pos_m", "oracle_pos_m", "ori_deg", "pos_ratio"],
        );
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[apr_pos, refined, oracle, ori], |v| {
            vec![ratio(v[1], v[0])]
        })?;
        self.save_report(&r)?;
        Timing {
            experiment: "virtual-rpr".into(),
            queries: ds.test.len(),
            median_ms: vec![("end_to_end".into(), median(&times)?)],
        }
        .save(&self.reports_dir())?;
        Ok(r)
    }

    /// Trains one student per Fourier level and scores each; returns the
    /// per-level reports followed by the sweep summary.
    pub fn ablate_fourier(&self) -> Result<Vec<Report>> {
        let ds = self.dataset()?;
        let db = self.database()?;
        let teacher: AprModel = self.load(Stage::Apr)?;
        let columns = ["student_pos_m", "student_ori_deg", "guess_initial_m", "guess_refined_m"];
        let mut summary = Report::new("ablate-fourier", &self.cfg, &[&["levels"][..], &columns[..]].concat());
        let mut out = Vec::new();
        for &levels in &self.cfg.experiments.ablation_levels {
            let cfg = self.cfg.with_overrides(&[format!("model.fourier_levels={levels}")])?;
            let trained = self.fit_pae(&cfg, &ds, &teacher)?;
            let path = self.ablation_path(levels);
            self.save_trained(&path, &trained, cfg.stage_digest(Stage::Pae), &cfg)?;
            let pae = trained.model;
            let (sp, so) = Self::student_errors(&pae, &teacher, &ds.test)?;
            let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
            let (gs, init, fin) = self.guess_trials(&ds, &db, &pae)?;
            let mut r = Report::new(&format!("ablate-fourier-L{levels}"), &cfg, &columns);
            // Student and guess errors are gathered over different sample
            // lists, so their per-scene medians are computed separately.
            let mut a = Report::new("", &cfg, &columns[..2]);
            push_scene_rows(&mut a, ds.n_scenes(), &scenes, &[sp, so], |_| vec![])?;
            let mut b = Report::new("", &cfg, &columns[2..]);
            push_scene_rows(&mut b, ds.n_scenes(), &gs, &[init, fin], |_| vec![])?;
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                r.push(ra.label.clone(), [ra.values.clone(), rb.values.clone()].concat())?;
            }
            let mean = r.rows.last().expect("mean row").values.clone();
            summary.push(format!("L={levels}"), [vec![levels as f64], mean].concat())?;
            self.save_report(&r)?;
            out.push(r);
        }
        self.save_report(&summary)?;
        out.push(summary);
        Ok(out)
    }

    /// Orientation from the refinement weights applied to neighbor
    /// quaternions, against the teacher's own orientation.
    pub fn orientation_affine(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let db = self.database()?;
        let apr: AprModel = self.load(Stage::Apr)?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let (mut apr_ori, mut aff_ori) = (Vec::new(), Vec::new());
        for ((z, p), s) in Self::apr_estimates(&apr, &ds.test)?.iter().zip(&ds.test) {
            let refined = refine_estimate(z, &p.x, s.scene, &db, &pae, &self.cfg.refine)?;
            let quats: Vec<_> = refined.neighbors.iter().map(|&i| db.pose(i).q).collect();
            let q = affine_orientation(&quats, &refined.fit.weights)?;
            apr_ori.push(angular_error_deg(&p.q, &s.pose.q));
            aff_ori.push(angular_error_deg(&q, &s.pose.q));
        }
        let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
        let mut r = Report::new("orientation-affine", &self.cfg, &["apr_ori_deg", "affine_ori_deg"]);
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[apr_ori, aff_ori], |_| vec![])?;
        self.save_report(&r)?;
        Ok(r)
    }

    /// L1 of decoded images against the true renders and against renders
    /// from poses displaced by half the scene extent in a random direction.
    pub fn decoder_probe(&self) -> Result<Report> {
        let ds = self.dataset()?;
        let pae: PaeModel = self.load(Stage::Pae)?;
        let decoder: DecoderModel = self.load(Stage::Decoder)?;
        let (mut near, mut far) = (Vec::new(), Vec::new());
        for (i, s) in ds.test.iter().enumerate() {
            let decoded = decoder.decode(&[pae.forward(&s.pose, s.scene)?])?.remove(0);
            let mut rng = stream(self.cfg.dataset.seed, purpose::PROBE, i as u64);
            let dir = loop {
                let v: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = crate::pose::norm3(&v);
                if n > 1e-3 && n <= 1.0 {
                    break v.map(|c| c / n);
                }
            };
            let shift = dir.map(|c| c * 0.5 * ds.extent());
            let moved = Pose::new(add3(&s.pose.x, &shift), s.pose.q)?;
            let far_render = render(&ds.scenes[s.scene], &moved, ds.resolution())?;
            near.push(decoded.l1(&s.image));
            far.push(decoded.l1(&far_render));
        }
        let scenes: Vec<usize> = ds.test.iter().map(|s| s.scene).collect();
        let mut r = Report::new("decoder-probe", &self.cfg, &["true_render_l1", "far_render_l1"]);
        push_scene_rows(&mut r, ds.n_scenes(), &scenes, &[near, far], |_| vec![])?;
        self.save_report(&r)?;
        Ok(r)
    }

    /// Collects every experiment report present into `report.json` and
    /// `report.txt`.
    pub fn report(&self) -> Result<Summary> {
        let mut experiments = Vec::new();
        for name in EXPERIMENTS {
            let path = self.report_path(name);
            if path.exists() {
                experiments.push(Report::load(&path)?);
            }
            if name == "ablate-fourier" {
                for &l in &self.cfg.experiments.ablation_levels {
                    let p = self.report_path(&format!("ablate-fourier-L{l}"));
                    if p.exists() {
                        experiments.push(Report::load(&p)?);
                    }
                }
            }
        }
        if experiments.is_empty() {
            return Err(Error::Missing(format!(
                "no experiment reports under {}",
                self.reports_dir().display()
            )));
        }
        let summary = Summary {
            config_digest: self.cfg.digest(),
            experiments,
        };
        write_json(&self.dir.join("report.json"), &summary)?;
        let text: Vec<String> = summary.experiments.iter().map(Report::to_table).collect();
        let path = self.dir.join("report.txt");
        fs::write(&path, text.join("\n")).map_err(|e| Error::io(&path, e))?;
        Ok(summary)
    }

    /// Runs one command by name.
    pub fn run_command(&self, command: &str) -> Result<Vec<Report>> {
        let one = |r: Result<Report>| r.map(|r| vec![r]);
        match command {
            "gen-scene" => one(self.gen_scene()),
            "train-apr" => one(self.train_apr()),
            "train-pae" => one(self.train_pae()),
            "train-decoder" => one(self.train_decoder()),
            "train-rpr" => one(self.train_rpr()),
            "eval" => one(self.eval()),
            "refine" => one(self.refine()),
            "refine-random-guess" => one(self.refine_random_guess()),
            "virtual-rpr" => one(self.virtual_rpr()),
            "ablate-fourier" => self.ablate_fourier(),
            "orientation-affine" => one(self.orientation_affine()),
            "decoder-probe" => one(self.decoder_probe()),
            "report" => Ok(self.report()?.experiments),
            other => Err(invalid!("unknown command `{other}`")),
        }
    }
}
