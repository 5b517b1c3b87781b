//! End-to-end acceptance run on the default synthetic benchmark
//! (1 scene, extent 10 m, 400 train / 100 test, 32x32, d = 64, seed 0).
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//! Takes on the order of 15-20 minutes on one core: the default pipeline is
//! run twice (the second time for the determinism check) plus a reduced
//! three-scene run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use poseae_autodiff::{grad_check, GradCheckOptions, ParamSet, Tensor};
use poseae_core::config::{RunConfig, Stage};
use poseae_core::dataset::Dataset;
use poseae_core::diagnostics::model_grad_check;
use poseae_core::fourier::FourierSpec;
use poseae_core::losses::{distillation_loss, learnable_pose_loss, learnable_pose_loss_node, LatentPair, LossWeights};
use poseae_core::metrics::median;
use poseae_core::models::{AprModel, DecoderModel, ModelKind, PaeModel};
use poseae_core::pipeline::{Pipeline, EXPERIMENTS};
use poseae_core::pose::{angular_error_deg, orientation_loss, position_loss};
use poseae_core::refine::{
    affine_objective, closed_form_affine_weights, iterative_affine_weights, oracle_offset, project_affine,
    virtual_rpr_refine, PoseDatabase, RefineConfig,
};
use poseae_core::report::{Report, Timing};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;

struct Gates {
    results: Vec<(u32, bool)>,
}

impl Gates {
    fn record(&mut self, n: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{n:>2}] {name}: {detail}");
        self.results.push((n, pass));
    }

    /// Records a criterion whose evaluation itself failed.
    fn record_err(&mut self, n: u32, name: &str, r: Result<(bool, String), String>) {
        match r {
            Ok((pass, detail)) => self.record(n, name, pass, detail),
            Err(e) => self.record(n, name, false, format!("error: {e}")),
        }
    }
}

type Check = Result<(bool, String), String>;

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn value(r: &Report, row: &str, col: &str) -> Result<f64, String> {
    r.value(row, col)
        .ok_or_else(|| format!("{} has no value at ({row}, {col})", r.experiment))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

// ---- 1: gradients ------------------------------------------------------

fn gradients() -> Check {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let opts = GradCheckOptions {
        max_coords_per_param: Some(16),
        ..GradCheckOptions::default()
    };
    let mut worst = Vec::new();
    let mut pass = true;
    for kind in [ModelKind::Apr, ModelKind::Pae, ModelKind::Decoder, ModelKind::Rpr] {
        let r = model_grad_check(kind, &cfg, &opts).map_err(e)?;
        pass &= r.max_rel_error < 1e-4;
        worst.push(format!("{}={:.1e}", kind.file_stem(), r.max_rel_error));
    }

    // learnable pose loss with respect to its two weights
    let mut params = ParamSet::new();
    params.push("s_x", Tensor::scalar(0.3));
    params.push("s_q", Tensor::scalar(-3.0));
    let (lx, lq) = (1.7, 0.08);
    let w = grad_check(
        &params,
        |g, ids| {
            let a = g.constant(Tensor::scalar(lx));
            let b = g.constant(Tensor::scalar(lq));
            learnable_pose_loss_node(g, a, b, ids[0], ids[1])
                .map_err(|err| poseae_autodiff::AutodiffError::Invalid(err.to_string()))
        },
        &GradCheckOptions::default(),
    )
    .map_err(e)?;
    pass &= w.max_rel_error < 1e-6;
    // closed form of the derivative: 1 - L exp(-s)
    let mut g = poseae_autodiff::Graph::new();
    let ids = params.bind(&mut g);
    let a = g.constant(Tensor::scalar(lx));
    let b = g.constant(Tensor::scalar(lq));
    let l = learnable_pose_loss_node(&mut g, a, b, ids[0], ids[1]).map_err(e)?;
    let grads = g.backward(l).map_err(e)?;
    let gs = params.collect_grads(&ids, &grads);
    let analytic_ok = (gs[0].item() - (1.0 - lx * (-0.3f64).exp())).abs() < 1e-12
        && (gs[1].item() - (1.0 - lq * 3f64.exp())).abs() < 1e-12;
    pass &= analytic_ok;

    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    Ok((
        pass,
        format!(
            "models [{}] (< 1e-4), pose-loss weights {:.1e} (< 1e-6), analytic derivative {}, {secs:.1} s (< 30 s)",
            worst.join(", "),
            w.max_rel_error,
            if analytic_ok { "matches" } else { "differs" }
        ),
    ))
}

// ---- 2: pose-core examples ----------------------------------------------

fn pose_core_examples() -> Check {
    let mut failures: Vec<&str> = Vec::new();
    let mut total = 0;
    let mut check = |ok: bool, what: &'static str| {
        total += 1;
        if !ok {
            failures.push(what);
        }
    };
    let vec_close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y));

    check(vec_close(&FourierSpec::new(2).encode(&[0.0]).map_err(e)?, &[0.0, 0.0, 1.0, 0.0, 1.0]), "fourier p=0 L=2");
    check(vec_close(&FourierSpec::new(1).encode(&[0.5]).map_err(e)?, &[0.5, 1.0, 0.0]), "fourier p=0.5 L=1");
    check(FourierSpec::new(6).encode(&[0.1, 0.2, 0.3]).map_err(e)?.len() == 39, "fourier 3-vector L=6");
    check(FourierSpec::new(2).encode(&[f64::NAN]).is_err(), "fourier rejects NaN");

    check(position_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) == 0.0, "position x=x0");
    check(close(position_loss(&[3.0, 4.0, 0.0], &[0.0, 0.0, 0.0]), 5.0), "position (3,4,0)");

    let q0 = [0.5, 0.5, -0.5, 0.5];
    check(close(orientation_loss(&q0, &q0).map_err(e)?, 0.0), "orientation q=q0");
    check(close(orientation_loss(&q0.map(|v| 2.0 * v), &q0).map_err(e)?, 0.0), "orientation q=2q0");
    check(close(orientation_loss(&q0.map(|v| -v), &q0).map_err(e)?, 2.0), "orientation q=-q0");
    check(orientation_loss(&[0.0; 4], &q0).is_err(), "orientation rejects zero q");

    let w0 = LossWeights { s_x: 0.0, s_q: 0.0 };
    check(close(learnable_pose_loss(1.3, 0.4, &w0), 1.7), "pose loss s=0");
    let w = LossWeights { s_x: 0.7, s_q: -1.1 };
    check(close(learnable_pose_loss(0.0, 0.0, &w), -0.4), "pose loss L=0");
    let init = LossWeights::default();
    check(close(learnable_pose_loss(1.0, 0.1, &init), 1.0 + 0.1 * 3f64.exp() - 3.0), "pose loss at init");

    let z = LatentPair::new(vec![0.6, 0.8], vec![1.0, 0.0]).map_err(e)?;
    let zero = LatentPair::new(vec![0.0; 2], vec![0.0; 2]).map_err(e)?;
    let (x, q) = ([1.0, 2.0, 3.0], [1.0, 0.0, 0.0, 0.0]);
    check(close(distillation_loss(&z, &z, &x, &q, &x, &q, &w).map_err(e)?, -0.4), "distillation student=teacher");
    check(close(distillation_loss(&z, &zero, &x, &q, &x, &q, &w).map_err(e)?, 2.0 - 0.4), "distillation zero student");

    let qz90 = [std::f64::consts::FRAC_PI_4.cos(), 0.0, 0.0, std::f64::consts::FRAC_PI_4.sin()];
    check(close(angular_error_deg(&q0, &q0), 0.0), "angular q1=q2");
    check(close(angular_error_deg(&q0, &q0.map(|v| -v)), 0.0), "angular double cover");
    check((angular_error_deg(&qz90, &[1.0, 0.0, 0.0, 0.0]) - 90.0).abs() < 1e-12, "angular 90 deg");

    check(median(&[1.0, 3.0]).map_err(e)? == 2.0, "median (1,3)");
    check(median(&[5.0]).map_err(e)? == 5.0, "median (5)");
    check(median(&[]).is_err(), "median empty");

    let detail = if failures.is_empty() {
        format!("{total} examples hold (real values within 1e-12)")
    } else {
        format!("failed of {total}: {failures:?}")
    };
    Ok((failures.is_empty(), detail))
}

// ---- 7: oracle agreement ------------------------------------------------

fn oracle_agreement() -> Check {
    let mut rng = SplitMix64::seed_from_u64(2024);
    let cfg = RefineConfig::default();
    let n = 128; // d = 64 per latent half
    let (mut worst_ratio, mut worst_sum, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let target: Vec<f64> = (0..3).map(|_| 1.0 / 3.0 + rng.random_range(-0.25..0.25)).collect();
        let a_true = project_affine(&target);
        let z: Vec<f64> = (0..n)
            .map(|r| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                (0..3).map(|i| a_true[i] * cols[i][r]).sum::<f64>() + noise
            })
            .collect();
        let exact = closed_form_affine_weights(&z, &cols).map_err(e)?;
        let fit = iterative_affine_weights(&z, &cols, &cfg).map_err(e)?;
        let ratio = affine_objective(&z, &cols, &fit.weights) / affine_objective(&z, &cols, &exact);
        worst_ratio = worst_ratio.max(ratio);
        for a in [&fit.weights, &exact] {
            worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
        }
        if ratio > 1.05 {
            failures += 1;
        }
    }
    Ok((
        failures == 0 && worst_sum < 1e-9,
        format!(
            "100 instances (k=3, 2x64 rows): worst objective ratio {worst_ratio:.4} (<= 1.05), \
             {failures} outside; worst |sum a - 1| {worst_sum:.1e} (< 1e-9)"
        ),
    ))
}

// ---- pipeline -------------------------------------------------------------

fn run(p: &Pipeline, command: &str) -> Result<Vec<Report>, String> {
    p.run_command(command).map_err(|err| format!("{command}: {err}"))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".timing.json") {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).unwrap_or_default());
            }
        }
    }
    out
}

struct DefaultRun {
    pipeline: Pipeline,
    apr_secs: f64,
    reports: BTreeMap<String, Report>,
}

fn default_run(out: &Path) -> Result<DefaultRun, String> {
    let cfg = RunConfig::default()
        .with_overrides(&[
            format!("output_dir={}", serde_json::to_string(out).map_err(e)?),
            "name=\"default\"".to_string(),
        ])
        .map_err(e)?;
    let pipeline = Pipeline::new(cfg, false).map_err(e)?;
    let mut reports = BTreeMap::new();
    let mut apr_secs = f64::NAN;
    for cmd in EXPERIMENTS {
        let t = Instant::now();
        for r in run(&pipeline, cmd)? {
            reports.insert(r.experiment.clone(), r);
        }
        if cmd == "train-apr" {
            apr_secs = t.elapsed().as_secs_f64();
        }
        eprintln!("  [{cmd}] {:.1} s", t.elapsed().as_secs_f64());
    }
    run(&pipeline, "report")?;
    Ok(DefaultRun {
        pipeline,
        apr_secs,
        reports,
    })
}

fn report<'a>(d: &'a DefaultRun, name: &str) -> Result<&'a Report, String> {
    d.reports.get(name).ok_or_else(|| format!("no {name} report"))
}

fn teacher_quality(d: &DefaultRun) -> Check {
    let r = report(d, "eval")?;
    let pos = value(r, "mean", "teacher_pos_m")?;
    let ori = value(r, "mean", "teacher_ori_deg")?;
    let extent = d.pipeline.cfg.dataset.extent;
    Ok((
        pos <= 0.05 * extent && ori <= 10.0 && d.apr_secs < 300.0,
        format!(
            "median {pos:.4} m (<= {:.2} m), {ori:.3} deg (<= 10 deg), training {:.0} s (< 300 s)",
            0.05 * extent,
            d.apr_secs
        ),
    ))
}

fn parity(d: &DefaultRun, multi: &Result<Report, String>) -> Check {
    let single = report(d, "eval")?;
    let multi = multi.as_ref().map_err(Clone::clone)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r) in [("1 scene", single), ("3 scenes", multi)] {
        let pr = value(r, "mean", "pos_ratio")?;
        let or = value(r, "mean", "ori_ratio")?;
        pass &= pr <= 1.5 && or <= 1.5;
        parts.push(format!(
            "{label}: student {:.4} m / {:.3} deg vs teacher {:.4} m / {:.3} deg (ratios {pr:.3}, {or:.3})",
            value(r, "mean", "student_pos_m")?,
            value(r, "mean", "student_ori_deg")?,
            value(r, "mean", "teacher_pos_m")?,
            value(r, "mean", "teacher_ori_deg")?,
        ));
    }
    Ok((pass, format!("{} (<= 1.5)", parts.join("; "))))
}

/// Three scenes, each the size of the default one. The regressor and
/// encoder see three times as many samples per epoch, so their epoch
/// counts are divided by three to keep the number of optimizer steps.
fn multi_scene_eval(out: &Path) -> Result<Report, String> {
    let base = RunConfig::default();
    let cfg = base
        .with_overrides(&[
            format!("output_dir={}", serde_json::to_string(out).map_err(e)?),
            "name=\"three-scenes\"".to_string(),
            "dataset.n_scenes=3".to_string(),
            format!("training.apr.epochs={}", base.training.apr.epochs / 3),
            format!("training.pae.epochs={}", base.training.pae.epochs / 3),
        ])
        .map_err(e)?;
    let p = Pipeline::new(cfg, false).map_err(e)?;
    for cmd in ["gen-scene", "train-apr", "train-pae"] {
        let t = Instant::now();
        run(&p, cmd)?;
        eprintln!("  [3 scenes: {cmd}] {:.1} s", t.elapsed().as_secs_f64());
    }
    run(&p, "eval")?.pop().ok_or_else(|| "eval produced no report".into())
}

fn random_guess(d: &DefaultRun) -> Check {
    let r = report(d, "refine-random-guess")?;
    let init = value(r, "mean", "initial_pos_m")?;
    let fin = value(r, "mean", "refined_pos_m")?;
    let ratio = value(r, "mean", "ratio")?;
    let cfg = &d.pipeline.cfg.experiments;
    let trials = cfg.guess_trials.max(d.pipeline.cfg.dataset.test_per_scene);
    Ok((
        ratio <= 0.6 && trials >= 100 && close(cfg.guess_sigma_fraction, 0.1),
        format!("{trials} trials at sigma = 10% extent: {init:.4} m -> {fin:.4} m, ratio {ratio:.3} (<= 0.6)"),
    ))
}

fn refine_apr(d: &DefaultRun) -> Check {
    let r = report(d, "refine")?;
    let mean = value(r, "mean", "pos_ratio")?;
    let mut worst_scene = 0.0f64;
    for row in r.rows.iter().filter(|row| row.label.starts_with("scene")) {
        worst_scene = worst_scene.max(value(r, &row.label, "pos_ratio")?);
    }
    Ok((
        mean <= 0.9 && worst_scene <= 1.02,
        format!(
            "{:.4} m -> {:.4} m, ratio {mean:.3} (<= 0.90); worst per-scene ratio {worst_scene:.3} (<= 1.02)",
            value(r, "mean", "apr_pos_m")?,
            value(r, "mean", "refined_pos_m")?
        ),
    ))
}

fn decoder(d: &DefaultRun) -> Check {
    let t = report(d, "train-decoder")?;
    let p = report(d, "decoder-probe")?;
    let ratio = value(t, "all", "l1_ratio")?;
    let near = value(p, "mean", "true_render_l1")?;
    let far = value(p, "mean", "far_render_l1")?;
    Ok((
        ratio < 0.5 && near < far,
        format!(
            "held-out L1 {:.4} vs untrained {:.4}, ratio {ratio:.3} (< 0.5); median L1 to true render {near:.4} < to extent/2-away render {far:.4}",
            value(t, "all", "test_l1")?,
            value(t, "all", "untrained_test_l1")?
        ),
    ))
}

/// Worst oracle-substituted error over every test query, recomputed
/// rather than read from the (median) report.
fn oracle_rpr_max(p: &Pipeline) -> Result<f64, String> {
    let ds: Dataset = p.dataset().map_err(e)?;
    let db: PoseDatabase = p.database().map_err(e)?;
    let apr: AprModel = p.load(Stage::Apr).map_err(e)?;
    let pae: PaeModel = p.load(Stage::Pae).map_err(e)?;
    let dec: DecoderModel = p.load(Stage::Decoder).map_err(e)?;
    let mut worst = 0.0f64;
    for s in &ds.test {
        let v = virtual_rpr_refine(&s.image, s.scene, &apr, &pae, &dec, &db, |_, _, reference| {
            Ok(oracle_offset(&s.pose, reference))
        })
        .map_err(e)?;
        worst = worst.max(position_loss(&v.pose.x, &s.pose.x));
    }
    Ok(worst)
}

fn virtual_rpr(d: &DefaultRun) -> Check {
    let r = report(d, "virtual-rpr")?;
    let ratio = value(r, "mean", "pos_ratio")?;
    let worst = oracle_rpr_max(&d.pipeline)?;
    let timing = Timing::load(&d.pipeline.timing_path("virtual-rpr")).map_err(e)?;
    let ms = timing.get("end_to_end").ok_or("no virtual-rpr timing")?;
    Ok((
        ratio <= 0.95 && worst <= 1e-12 && ms < 1000.0,
        format!(
            "{:.4} m -> {:.4} m, ratio {ratio:.3} (<= 0.95); oracle regressor worst error {worst:.1e} m \
             (<= 1e-12, rounding only); {ms:.1} ms per query (< 1 s)",
            value(r, "mean", "apr_pos_m")?,
            value(r, "mean", "refined_pos_m")?
        ),
    ))
}

fn orientation_affine(d: &DefaultRun) -> Check {
    let first = report(d, "orientation-affine")?;
    let again = run(&d.pipeline, "orientation-affine")?.pop().ok_or("no report")?;
    let apr = value(first, "mean", "apr_ori_deg")?;
    let aff = value(first, "mean", "affine_ori_deg")?;
    let same = serde_json::to_vec(first).map_err(e)? == serde_json::to_vec(&again).map_err(e)?;
    Ok((
        same && apr.is_finite() && aff.is_finite(),
        format!(
            "APR {apr:.3} deg, affine {aff:.3} deg (recorded, no directional gate); rerun {}",
            if same { "identical" } else { "differs" }
        ),
    ))
}

fn determinism(d: &DefaultRun) -> Check {
    let dir = d.pipeline.dir.clone();
    let first = files_under(&dir);
    let moved = dir.with_extension("first");
    fs::rename(&dir, &moved).map_err(e)?;
    eprintln!("  repeating the default pipeline");
    let again = default_run(dir.parent().ok_or("run directory has no parent")?)?;
    let second = files_under(&again.pipeline.dir);
    let differing: Vec<String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let checkpoints = first.keys().filter(|k| k.extension().is_some_and(|x| x == "ckpt")).count();
    let reports = first.keys().filter(|k| k.extension().is_some_and(|x| x == "json")).count();
    Ok((
        differing.is_empty() && checkpoints >= 4 + d.pipeline.cfg.experiments.ablation_levels.len(),
        if differing.is_empty() {
            format!("{} files ({checkpoints} checkpoints, {reports} JSON files) byte-identical across two runs", first.len())
        } else {
            format!("differing files: {differing:?}")
        },
    ))
}

fn footprint(d: &DefaultRun) -> Check {
    let ds = d.pipeline.dataset().map_err(e)?;
    let tmp = tempfile::tempdir().map_err(e)?;
    let mut sizes = Vec::new();
    let counts = [100usize, 200, 400];
    for n in counts {
        let path = tmp.path().join(format!("db{n}.json"));
        PoseDatabase::from_samples(&ds.train[..n]).save(&path).map_err(e)?;
        sizes.push(fs::metadata(&path).map_err(e)?.len() as f64);
    }
    // stored fields per entry: 3 + 4 reals and one integer scene id
    let v: serde_json::Value = serde_json::from_slice(&fs::read(d.pipeline.db_path()).map_err(e)?).map_err(e)?;
    let entries = v.as_array().ok_or("database is not a list")?;
    let fields_ok = entries.len() == ds.train.len()
        && entries.iter().all(|en| {
            en.as_object().is_some_and(|o| o.len() == 3)
                && en["x"].as_array().is_some_and(|a| a.len() == 3 && a.iter().all(|c| c.is_f64() || c.is_i64()))
                && en["q"].as_array().is_some_and(|a| a.len() == 4)
                && en["scene"].is_u64()
        });
    let per_entry = (sizes[2] - sizes[1]) / (counts[2] - counts[1]) as f64;
    let predicted = sizes[1] - per_entry * (counts[1] - counts[0]) as f64;
    let linear = (predicted - sizes[0]).abs() / sizes[0] < 0.05;
    let timing = Timing::load(&d.pipeline.timing_path("refine")).map_err(e)?;
    let ms = timing.get("refine").ok_or("no refine timing")?;
    Ok((
        fields_ok && linear && ms < 50.0,
        format!(
            "7 reals + 1 integer per entry: {}; {:.0} bytes/entry, linear within {:.1}% ; refinement {ms:.2} ms per query (median, < 50 ms)",
            if fields_ok { "yes" } else { "no" },
            per_entry,
            100.0 * (predicted - sizes[0]).abs() / sizes[0]
        ),
    ))
}

fn main() -> ExitCode {
    // libtest flags (e.g. `--nocapture`) are accepted and ignored; `--list`
    // must print nothing for test discovery.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let started = Instant::now();
    let mut gates = Gates { results: Vec::new() };
    println!("acceptance: default synthetic benchmark, seed 0");

    gates.record_err(1, "gradient correctness", gradients());
    gates.record_err(2, "Fourier/quaternion analytics", pose_core_examples());
    gates.record_err(7, "oracle agreement", oracle_agreement());

    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(err) => {
            println!("FAIL cannot create a working directory: {err}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("running the default pipeline under {}", tmp.path().display());
    match default_run(tmp.path()) {
        Ok(d) => {
            gates.record_err(3, "teacher quality", teacher_quality(&d));
            let multi = multi_scene_eval(tmp.path());
            gates.record_err(4, "distillation parity", parity(&d, &multi));
            gates.record_err(5, "refinement from random guess", random_guess(&d));
            gates.record_err(6, "refinement of APR estimates", refine_apr(&d));
            gates.record_err(8, "decoder", decoder(&d));
            gates.record_err(9, "virtual relative regression", virtual_rpr(&d));
            gates.record_err(10, "orientation affine", orientation_affine(&d));
            gates.record_err(12, "footprint", footprint(&d));
            gates.record_err(11, "determinism", determinism(&d));
        }
        Err(err) => {
            for (n, name) in [
                (3, "teacher quality"),
                (4, "distillation parity"),
                (5, "refinement from random guess"),
                (6, "refinement of APR estimates"),
                (8, "decoder"),
                (9, "virtual relative regression"),
                (10, "orientation affine"),
                (11, "determinism"),
                (12, "footprint"),
            ] {
                gates.record(n, name, false, format!("pipeline failed: {err}"));
            }
        }
    }

    gates.results.sort();
    let failed: Vec<u32> = gates.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        gates.results.len() - failed.len(),
        gates.results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
