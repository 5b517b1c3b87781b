use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "name=tiny",
    "dataset.train_per_scene=40",
    "dataset.test_per_scene=10",
    "dataset.resolution=16",
    "model.latent_dim=8",
    "model.trunk_widths=[24]",
    "model.pae_widths=[16,16]",
    "model.fourier_levels=2",
    "model.decoder_widths=[16,32]",
    "model.rpr_trunk_widths=[16]",
    "training.apr.epochs=3",
    "training.pae.epochs=3",
    "training.decoder.epochs=2",
    "training.rpr.epochs=2",
    "refine.inner=20",
    "refine.outer=2",
    "experiments.guess_trials=10",
    "experiments.ablation_levels=[0,2]",
];

fn poseae(dir: &Path, extra: &[&str], args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_poseae"));
    cmd.arg("--set").arg(format!("output_dir={}", dir.display()));
    for s in TINY.iter().chain(extra) {
        cmd.arg("--set").arg(s);
    }
    cmd.args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn all_runs_the_pipeline_and_report_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = poseae(tmp.path(), &[], &["all"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("virtual-rpr"), "{stdout}");

    let run = tmp.path().join("tiny");
    let json = fs::read(run.join("report.json")).unwrap();
    let txt = fs::read(run.join("report.txt")).unwrap();
    assert_eq!(code(&poseae(tmp.path(), &[], &["report"])), 0);
    assert_eq!(fs::read(run.join("report.json")).unwrap(), json);
    assert_eq!(fs::read(run.join("report.txt")).unwrap(), txt);

    let summary: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert!(summary["experiments"].as_array().unwrap().len() >= 12);
}

#[test]
fn missing_prerequisite_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let out = poseae(tmp.path(), &[], &["train-pae"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gen-scene"), "{err}");
}

#[test]
fn stale_artifacts_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&poseae(tmp.path(), &[], &["gen-scene"])), 0);
    assert_eq!(code(&poseae(tmp.path(), &[], &["train-apr"])), 0);
    let out = poseae(tmp.path(), &["training.apr.epochs=4"], &["train-pae"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest mismatch"));
    let out = poseae(tmp.path(), &["training.apr.epochs=4"], &["--force", "train-pae"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&poseae(tmp.path(), &["model.nope=3"], &["gen-scene"])), 1);
    assert_eq!(code(&poseae(tmp.path(), &["refine.k=0"], &["gen-scene"])), 1);
    assert_eq!(code(&poseae(tmp.path(), &[], &["no-such-command"])), 1);
    let missing = tmp.path().join("absent.json");
    let out = Command::new(env!("CARGO_BIN_EXE_poseae"))
        .args(["--config", missing.to_str().unwrap(), "show-config"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn divergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&poseae(tmp.path(), &[], &["gen-scene"])), 0);
    let out = poseae(tmp.path(), &["training.apr.lr=1e300"], &["train-apr"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_overrides_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let out = poseae(tmp.path(), &[], &["show-config"]);
    assert_eq!(code(&out), 0);
    let path = tmp.path().join("cfg.json");
    fs::write(&path, &out.stdout).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_poseae"))
        .args(["--config", path.to_str().unwrap(), "--set", "refine.k=5", "show-config"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["refine"]["k"], 5);
    assert_eq!(cfg["dataset"]["resolution"], 16);
    assert_eq!(cfg["refine"]["closed_form"], false);

    let out = poseae(tmp.path(), &[], &["--closed-form", "show-config"]);
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["refine"]["closed_form"], true);
}
