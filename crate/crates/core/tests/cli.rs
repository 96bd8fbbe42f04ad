use std::fs;
use std::path::Path;
use std::process::Command;

use flowse::audio::{synth_pair, write_wav, SynthConfig};
use flowse::cli::{cmd_enhance, cmd_oracle_check, cmd_schedule, cmd_sweep_steps, cmd_train, read_rows_csv};
use flowse::config::{Generator, SweepPredictor};
use flowse::{Error, InferenceMode, LossKind, PathSpec, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.train.steps = 200;
    cfg.train.hidden = vec![16, 16];
    cfg.data.n_eval = 50;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowse"))
}

fn schedule_beta(cfg: &RunConfig, t_index: usize) -> f64 {
    cmd_schedule(cfg).unwrap();
    let rows = read_rows_csv(&cfg.out_dir.join("schedule.csv")).unwrap();
    rows[t_index][2]
}

#[test]
fn schedule_csv_matches_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());

    cfg.path = PathSpec::sb_ve(2.6, 0.4).unwrap();
    assert!((schedule_beta(&cfg, 500) - 0.277_777_777_777_777_8).abs() < 1e-12);

    cfg.path = PathSpec::sb_ve(0.99, 0.375).unwrap();
    cmd_schedule(&cfg).unwrap();
    let rows = read_rows_csv(&dir.path().join("schedule.csv")).unwrap();
    assert!(rows.iter().all(|r| (r[2] - r[0]).abs() < 0.005));

    cfg.path = PathSpec::icfm(0.1).unwrap();
    cmd_schedule(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(text.starts_with("t,alpha,beta,var\n"));
    for r in read_rows_csv(&dir.path().join("schedule.csv")).unwrap() {
        assert_eq!(r[2], r[0]);
    }
    // 17 significant digits
    let cell = text.lines().nth(2).unwrap().split(',').next().unwrap();
    assert_eq!(cell, "1.0000000000000000e-3");
}

#[test]
fn training_is_reproducible_and_zero_steps_is_init() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_train(&small(a.path())).unwrap();
    cmd_train(&small(b.path())).unwrap();
    let read = |d: &Path| fs::read(d.join("checkpoint.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(
        fs::read(a.path().join("loss_trace.csv")).unwrap(),
        fs::read(b.path().join("loss_trace.csv")).unwrap()
    );

    let zero = tempfile::tempdir().unwrap();
    let mut cfg = small(zero.path());
    cfg.train.steps = 0;
    cmd_train(&cfg).unwrap();
    let model = flowse::PredictorModel::load(&zero.path().join("checkpoint.json")).unwrap();
    let init = flowse::PredictorModel::new(
        cfg.train.shape(1),
        LossKind::Dp,
        cfg.path,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )
    .unwrap();
    assert_eq!(model, init);
}

#[test]
fn ddp_and_one_step_ode_enhance_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cmd_train(&cfg).unwrap();

    cfg.inference.mode = InferenceMode::Ddp;
    cmd_enhance(&cfg).unwrap();
    let ddp = fs::read(dir.path().join("enhanced.csv")).unwrap();

    cfg.inference.mode = InferenceMode::Ode;
    cfg.inference.n_steps = 1;
    cmd_enhance(&cfg).unwrap();
    assert_eq!(fs::read(dir.path().join("enhanced.csv")).unwrap(), ddp);
}

#[test]
fn zero_fm_model_returns_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.train.loss_kind = LossKind::Fm;
    cfg.train.steps = 0;
    cmd_train(&cfg).unwrap();
    cfg.inference.n_steps = 7;
    let metrics = cmd_enhance(&cfg).unwrap();
    assert_eq!(metrics.mean_mse, metrics.baseline_mse);
}

#[test]
fn enhance_reads_dataset_csv_and_y_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cmd_train(&cfg).unwrap();
    flowse::cli::cmd_dataset(&cfg).unwrap();
    let from_set = cmd_enhance(&cfg).unwrap();

    cfg.enhance.input = Some(dir.path().join("dataset.csv"));
    let from_csv = cmd_enhance(&cfg).unwrap();
    assert_eq!(from_set.mean_mse, from_csv.mean_mse);

    let y_only: String = read_rows_csv(&dir.path().join("dataset.csv"))
        .unwrap()
        .iter()
        .map(|r| format!("{:e}\n", r[1]))
        .collect();
    fs::write(dir.path().join("y.csv"), y_only).unwrap();
    cfg.enhance.input = Some(dir.path().join("y.csv"));
    let blind = cmd_enhance(&cfg).unwrap();
    assert_eq!(blind.n_items, 50);
    assert!(blind.mean_mse.is_none());
}

#[test]
fn exact_predictor_sweep_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.path = PathSpec::sb_ve(2.6, 0.4).unwrap();
    cfg.sweep.predictor = SweepPredictor::Exact;
    let rows = cmd_sweep_steps(&cfg).unwrap();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert!((r.mse - rows[0].mse).abs() < 1e-8, "{r:?}");
    }

    cfg.sweep.n_steps = vec![4];
    cmd_sweep_steps(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn oracle_check_passes_and_catches_corruption() {
    let mut log = Vec::new();
    for seed in [0, 1, 12345] {
        let cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        cmd_oracle_check(&cfg, &mut log).unwrap();
    }
    let mut cfg = RunConfig::default();
    cfg.oracle.corrupt_coefficient = 1e-3;
    match cmd_oracle_check(&cfg, &mut log) {
        Err(Error::InvariantFailed(names)) => assert!(names.contains("exact-transport"), "{names}"),
        other => panic!("expected an invariant failure, got {other:?}"),
    }
}

#[test]
fn audio_enhancement_writes_wavs_and_si_sdr() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.data.generator = Generator::Audio;
    cfg.data.n_eval = 1;
    cfg.audio.window = 64;
    cfg.audio.hop = 16;
    cfg.audio.train_clips = 2;
    cfg.audio.synth.duration_s = 0.05;
    cfg.train.noise_domain = flowse::paths::NoiseDomain::Complex;
    cfg.inference.n_steps = 3;
    cmd_train(&cfg).unwrap();
    let m = cmd_enhance(&cfg).unwrap();
    assert!(m.mean_si_sdr_db.is_some());
    assert!(dir.path().join("clip000_enhanced.wav").exists());

    let pair = synth_pair(
        &SynthConfig {
            duration_s: 0.05,
            ..SynthConfig::default()
        },
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    write_wav(&dir.path().join("in.wav"), &pair.noisy).unwrap();
    write_wav(&dir.path().join("ref.wav"), &pair.clean).unwrap();
    cfg.enhance.input = Some(dir.path().join("in.wav"));
    cfg.enhance.reference = Some(dir.path().join("ref.wav"));
    let m = cmd_enhance(&cfg).unwrap();
    assert_eq!(m.items.len(), 1);
    assert!(dir.path().join("enhanced.wav").exists());
}

#[test]
fn binary_flags_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("--dump-defaults").output().unwrap();
    assert!(out.status.success());
    let defaults = String::from_utf8(out.stdout).unwrap();
    assert_eq!(RunConfig::from_toml_str(&defaults).unwrap(), RunConfig::default());

    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, "[path]\nfamily = \"sb-ve\"\nk = 2.6\nc = 0.4\n").unwrap();
    let status = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "--seed", "3", "--out"])
        .arg(dir.path().join("o"))
        .arg("schedule")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("o/schedule.csv").exists());

    fs::write(&cfg_path, "bogus = 1\n").unwrap();
    let status = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "schedule"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    fs::write(&cfg_path, "[oracle]\ncorrupt_coefficient = 0.01\n").unwrap();
    let out = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "oracle-check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exact-transport"));

    let status = bin()
        .args(["--config", "/nonexistent/run.toml", "schedule"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}
