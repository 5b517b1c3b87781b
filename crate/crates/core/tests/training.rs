use poseae_core::config::RunConfig;
use poseae_core::dataset::Dataset;
use poseae_core::models::{AprModel, DecoderModel, Model, PaeModel, RprModel};
use poseae_core::pipeline::Pipeline;
use poseae_core::train::{decoder_l1, snapshot, train_apr, train_decoder, train_pae, train_rpr, TrainConfig};

fn tiny_cfg() -> RunConfig {
    RunConfig::default()
        .with_overrides(&[
            "dataset.train_per_scene=48",
            "dataset.test_per_scene=12",
            "dataset.resolution=16",
            "model.latent_dim=8",
            "model.trunk_widths=[24]",
            "model.pae_widths=[16,16]",
            "model.fourier_levels=3",
            "model.decoder_widths=[16,32]",
            "model.rpr_trunk_widths=[16]",
            "training.apr.epochs=20",
            "training.pae.epochs=20",
            "training.decoder.epochs=10",
            "training.rpr.epochs=5",
        ])
        .unwrap()
}

fn teacher(cfg: &RunConfig, ds: &Dataset) -> AprModel {
    let m = AprModel::from_config(&cfg.apr_config(Pipeline::position_prior(ds))).unwrap();
    train_apr(ds, m, &cfg.training.apr).unwrap().model
}

#[test]
fn zero_epochs_leave_every_model_at_its_initialization() {
    let cfg = tiny_cfg();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let zero = |t: &TrainConfig| TrainConfig { epochs: 0, ..t.clone() };

    let apr = AprModel::from_config(&cfg.apr_config(Pipeline::position_prior(&ds))).unwrap();
    let init = snapshot(apr.params());
    let trained = train_apr(&ds, apr, &zero(&cfg.training.apr)).unwrap();
    assert_eq!(snapshot(trained.model.params()), init);
    assert!(trained.log.is_empty());

    let pae = PaeModel::from_config(&cfg.pae_config()).unwrap();
    let init = snapshot(pae.params());
    let trained = train_pae(&ds, &trained.model, pae, &zero(&cfg.training.pae)).unwrap();
    assert_eq!(snapshot(trained.model.params()), init);

    let dec = DecoderModel::from_config(&cfg.decoder_config()).unwrap();
    let init = snapshot(dec.params());
    let d = train_decoder(&ds, &trained.model, dec, &zero(&cfg.training.decoder)).unwrap();
    assert_eq!(snapshot(d.model.params()), init);

    let rpr = RprModel::from_config(&cfg.rpr_config()).unwrap();
    let init = snapshot(rpr.params());
    let r = train_rpr(&ds, rpr, &zero(&cfg.training.rpr), &cfg.training.rpr_pairing, None).unwrap();
    assert_eq!(snapshot(r.model.params()), init);
}

#[test]
fn distillation_leaves_the_teacher_untouched_and_reduces_the_latent_term() {
    let cfg = tiny_cfg();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let t = teacher(&cfg, &ds);
    let before = snapshot(t.params());
    let pae = PaeModel::from_config(&cfg.pae_config()).unwrap();
    let trained = train_pae(&ds, &t, pae, &cfg.training.pae).unwrap();
    assert_eq!(snapshot(t.params()), before);
    let first = trained.log.first().unwrap().latent_loss.unwrap();
    let last = trained.log.last().unwrap().latent_loss.unwrap();
    assert!(last < first, "latent term {first} -> {last}");
}

#[test]
fn teacher_training_reduces_the_loss_and_is_deterministic() {
    let cfg = tiny_cfg();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let run = || {
        let m = AprModel::from_config(&cfg.apr_config(Pipeline::position_prior(&ds))).unwrap();
        train_apr(&ds, m, &cfg.training.apr).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(snapshot(a.model.params()), snapshot(b.model.params()));
    assert_eq!(a.log, b.log);
    assert!(a.log.last().unwrap().loss < a.log[0].loss);
    assert_eq!(a.log.len(), cfg.training.apr.epochs);
}

#[test]
fn decoder_training_lowers_the_test_reconstruction_error() {
    let cfg = tiny_cfg();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let t = teacher(&cfg, &ds);
    let pae = train_pae(&ds, &t, PaeModel::from_config(&cfg.pae_config()).unwrap(), &cfg.training.pae)
        .unwrap()
        .model;
    let dec = DecoderModel::from_config(&cfg.decoder_config()).unwrap();
    let untrained = decoder_l1(&dec, &pae, &ds.test).unwrap();
    let trained = train_decoder(&ds, &pae, dec, &cfg.training.decoder).unwrap().model;
    let l1 = decoder_l1(&trained, &pae, &ds.test).unwrap();
    assert!(l1 < untrained, "{untrained} -> {l1}");
}

#[test]
fn diverging_training_is_a_numerical_abort() {
    let cfg = tiny_cfg()
        .with_overrides(&["training.apr.lr=1e300", "training.apr.epochs=3"])
        .unwrap();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let m = AprModel::from_config(&cfg.apr_config(Pipeline::position_prior(&ds))).unwrap();
    let err = train_apr(&ds, m, &cfg.training.apr).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn invalid_training_settings_are_rejected() {
    let cfg = tiny_cfg();
    let ds = Dataset::build(&cfg.dataset, cfg.refine.k).unwrap();
    let m = AprModel::from_config(&cfg.apr_config(Pipeline::position_prior(&ds))).unwrap();
    let bad = TrainConfig { batch_size: 0, ..cfg.training.apr.clone() };
    let err = train_apr(&ds, m, &bad).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
