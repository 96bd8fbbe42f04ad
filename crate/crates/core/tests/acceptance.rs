//! Acceptance suite: one line per criterion, nonzero exit if any gated
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.
//!
//! Reference constants in criterion 1 were computed independently at 40
//! significant digits; every other threshold is pinned below.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use flowse::audio::{
    decode_wav, encode_wav, istft, si_sdr, stft, synth_pair, SynthConfig, Waveform, DEFAULT_HOP, DEFAULT_WINDOW,
};
use flowse::model::{draw_training_inputs, gradient_check, train, ModelShape, PairSource, TrainOutcome};
use flowse::oracle::{ExactPredictor, GaussianWorld, PosteriorMeanPredictor, TwoArcs};
use flowse::paths::NoiseDomain;
use flowse::sampler::{ddp_infer_batch, solve_ode_batch, BridgeStd, Predictor};
use flowse::{InferenceConfig, LossKind, PathFamily, PathSpec, PredictorModel, Schedule, TrainConfig};

/// `sigma_sq(k = 2.6, c = 0.4, t = 1)`.
const SIGMA1_SQ_REF: f64 = 1.205_637_050_184_073_6;
/// `beta(0.5)` for `k = 2.6`: `(k - 1) / (k^2 - 1) = 1 / (k + 1)`.
const BETA_HALF_REF: f64 = 0.277_777_777_777_777_8;

const TRAIN_SEED: u64 = 20_240_611;
const EVAL_SEED: u64 = 7_777;

struct Outcome {
    passed: bool,
    gated: bool,
    detail: String,
}

fn gated(passed: bool, detail: String) -> Outcome {
    Outcome {
        passed,
        gated: true,
        detail,
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("runtime {s:.2}s (limit {limit_s}s)"))
}

fn rows(v: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((v.len(), v[0].len()), |(i, j)| v[i][j])
}

fn mean_sq(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.nrows() as f64
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

// ------------------------------------------------------------------------

fn schedule_algebra() -> Outcome {
    let start = Instant::now();
    let spec = PathSpec::sb_ve(2.6, 0.4).unwrap();
    let s1 = spec.sigma_sq(1.0).unwrap();
    let beta = spec.point(0.5).unwrap().beta;
    let above = PathSpec::sb_ve(1.0 + 1e-6, 0.4).unwrap();
    let below = PathSpec::sb_ve(1.0 - 1e-6, 0.4).unwrap();
    let gap = (0..=1000)
        .map(|i| {
            let t = i as f64 / 1000.0;
            (above.sigma_sq(t).unwrap() - below.sigma_sq(t).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    let (fast, rt) = within(start.elapsed(), 1.0);
    let ok = (s1 - SIGMA1_SQ_REF).abs() < 1e-5 && (beta - BETA_HALF_REF).abs() < 1e-5 && gap < 1e-8 && fast;
    gated(
        ok,
        format!("sigma1^2={s1:.8} (ref {SIGMA1_SQ_REF:.8}, tol 1e-5), beta(0.5)={beta:.8} (ref {BETA_HALF_REF:.8}, tol 1e-5), k->1 gap={gap:.1e} (tol 1e-8), {rt}"),
    )
}

fn straightness() -> Outcome {
    let start = Instant::now();
    let deviation = |spec: PathSpec| {
        spec.schedule_curve(1001)
            .unwrap()
            .iter()
            .map(|p| (p.beta - p.t).abs())
            .fold(0.0, f64::max)
    };
    let curved = deviation(PathSpec::sb_ve(2.6, 0.4).unwrap());
    let straight = deviation(PathSpec::sb_ve(0.99, 0.375).unwrap());
    let (fast, rt) = within(start.elapsed(), 1.0);
    gated(
        curved > 0.2 && straight < 0.005 && fast,
        format!("max|beta-t| k=2.6: {curved:.4} (> 0.2), k=0.99: {straight:.5} (< 0.005), {rt}"),
    )
}

fn exact_transport() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = gaussian(&mut rng, 32, 4);
    let y = gaussian(&mut rng, 32, 4);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for path in PathSpec::reference_configs() {
        let icfm = path.family() == PathFamily::Icfm;
        let kinds: &[LossKind] = if icfm {
            &[LossKind::Dp, LossKind::Fm]
        } else {
            &[LossKind::Dp]
        };
        let variants: &[BridgeStd] = if icfm {
            &[BridgeStd::Difference]
        } else {
            &[BridgeStd::Difference, BridgeStd::Complement]
        };
        let steps: &[usize] = if icfm { &[1, 2, 4, 8, 32] } else { &[2, 4, 8, 32] };
        for &kind in kinds {
            let exact = ExactPredictor { x0: x0.clone(), kind };
            for &bridge_std in variants {
                for &n in steps {
                    let cfg = InferenceConfig {
                        bridge_std,
                        ..InferenceConfig::ode(path, kind, n)
                    };
                    let out = solve_ode_batch(&exact, y.view(), &cfg, &Schedule::uniform(n).unwrap()).unwrap();
                    let num = (&out - &x0).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let den = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
                    worst = worst.max(num / den);
                    runs += 1;
                }
            }
        }
    }
    let (fast, rt) = within(start.elapsed(), 1.0);
    gated(
        worst < 1e-10 && fast,
        format!("{runs} runs over 3 families, max relative error {worst:.2e} (< 1e-10), {rt}"),
    )
}

fn ddp_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let path = PathSpec::icfm(0.1).unwrap();
    let y = gaussian(&mut rng, 64, 3);
    let mut max_gap: f64 = 0.0;
    for kind in [LossKind::Dp, LossKind::Fm] {
        let mut model = PredictorModel::new(ModelShape::new(3), kind, path, &mut rng).unwrap();
        model.randomize_head(0.5, &mut rng);
        let ddp = ddp_infer_batch(&model, y.view()).unwrap();
        let ode = solve_ode_batch(
            &model,
            y.view(),
            &InferenceConfig::ode(path, kind, 1),
            &Schedule::uniform(1).unwrap(),
        )
        .unwrap();
        max_gap = ddp.iter().zip(&ode).map(|(a, b)| (a - b).abs()).fold(max_gap, f64::max);
    }
    let (fast, rt) = within(start.elapsed(), 1.0);
    gated(
        max_gap == 0.0 && fast,
        format!("DP and FM, max |ddp - ode1| = {max_gap:e} (must be exactly 0), {rt}"),
    )
}

fn gradient_check_all() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let world = GaussianWorld::isotropic(2, 1.0, 0.5).unwrap();
    let combos = [
        (PathSpec::icfm(0.1).unwrap(), LossKind::Dp),
        (PathSpec::icfm(0.1).unwrap(), LossKind::Fm),
        (PathSpec::sb_ve(2.6, 0.4).unwrap(), LossKind::Dp),
        (PathSpec::sb_sv(2.6, 0.15).unwrap(), LossKind::Dp),
    ];
    let mut worst: f64 = 0.0;
    let mut checked = usize::MAX;
    for (path, kind) in combos {
        let mut model = PredictorModel::new(ModelShape::new(2), kind, path, &mut rng).unwrap();
        model.randomize_head(0.3, &mut rng);
        let batch = world.sample_pairs(8, &mut rng).unwrap();
        let inputs = draw_training_inputs(&batch, &path, kind, 0.0, NoiseDomain::Real, &mut rng).unwrap();
        let report = gradient_check(&model, &inputs, 1e-6, 200, &mut rng).unwrap();
        worst = worst.max(report.max_rel_error);
        checked = checked.min(report.checked);
    }
    let (fast, rt) = within(start.elapsed(), 30.0);
    gated(
        worst < 1e-4 && checked >= 100 && fast,
        format!(
            "DP x {{icfm, sb-ve, sb-sv}} + FM x icfm (FM is undefined on bridge paths), {checked} params each, max rel err {worst:.2e} (< 1e-4), {rt}"
        ),
    )
}

fn train_gaussian(path: PathSpec, steps: usize) -> (TrainOutcome, Duration) {
    let start = Instant::now();
    let cfg = TrainConfig {
        steps,
        loss_kind: LossKind::Dp,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &path, &GaussianWorld::standard_1d(), TRAIN_SEED).unwrap();
    (out, start.elapsed())
}

fn gaussian_end_to_end(model: &PredictorModel, elapsed: Duration) -> Outcome {
    let world = GaussianWorld::standard_1d();
    let pairs = world
        .sample_pairs(10_000, &mut ChaCha8Rng::seed_from_u64(EVAL_SEED))
        .unwrap();
    let (x0, y) = (rows(pairs.x0()), rows(pairs.y()));
    let out = ddp_infer_batch(model, y.view()).unwrap();
    let mse = mean_sq(&out, &x0);
    let floor = world.mmse_floor();
    let cond = y.mapv(|v| v / 2.0);
    let empirical = mean_sq(&cond, &x0);
    let rel = mse / floor - 1.0;
    let excess = mse / empirical - 1.0;
    let (fast, rt) = within(elapsed, 300.0);
    gated(
        rel.abs() <= 0.10 && excess <= 0.10 && fast,
        format!(
            "ICFM-DP 20000 steps, DDP mse {mse:.5} vs analytic floor {floor} ({:+.2}%, |.| <= 10%), excess over E[x0|y] on same pairs {:+.2}% (<= 10%), train {rt}",
            100.0 * rel,
            100.0 * excess
        ),
    )
}

fn mmse_floor(checkpoints: &[&PredictorModel]) -> Outcome {
    let start = Instant::now();
    let world = GaussianWorld::standard_1d();
    let mut rng = ChaCha8Rng::seed_from_u64(EVAL_SEED + 1);
    let pairs = world.sample_pairs(10_000, &mut rng).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for model in checkpoints {
        let path = *model.path();
        let inputs = draw_training_inputs(&pairs, &path, LossKind::Dp, 0.0, NoiseDomain::Real, &mut rng).unwrap();
        let oracle = PosteriorMeanPredictor {
            world: &world,
            path,
            kind: LossKind::Dp,
        };
        let oracle_loss = per_row_loss(&oracle, &inputs);
        let model_loss = model.loss_value(&inputs).unwrap();
        ok &= oracle_loss <= model_loss * 1.01;
        parts.push(format!(
            "{path}: oracle {oracle_loss:.5} <= model {model_loss:.5} x 1.01"
        ));
    }
    let (fast, rt) = within(start.elapsed(), 60.0);
    gated(ok && fast, format!("{}, {rt}", parts.join("; ")))
}

/// DP loss of a predictor evaluated row by row at each row's own time.
fn per_row_loss(p: &dyn Predictor, inputs: &flowse::model::TrainingInputs) -> f64 {
    let mut total = 0.0;
    for i in 0..inputs.t.len() {
        let xt = inputs.x_t.slice(ndarray::s![i..i + 1, ..]);
        let y = inputs.y.slice(ndarray::s![i..i + 1, ..]);
        let f = p.predict(xt, y, inputs.t[i]).unwrap();
        total += f
            .iter()
            .zip(inputs.target.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    total / inputs.t.len() as f64
}

fn two_arcs_sweep(model: &PredictorModel, train_time: Duration) -> (Outcome, Outcome) {
    let start = Instant::now();
    let arcs = TwoArcs::default();
    let pairs = arcs
        .sample_pairs(2000, &mut ChaCha8Rng::seed_from_u64(EVAL_SEED))
        .unwrap();
    let (x0, y) = (rows(pairs.x0()), rows(pairs.y()));
    let baseline = mean_sq(&y, &x0);
    let run = |n: usize| {
        let cfg = InferenceConfig::ode(*model.path(), LossKind::Dp, n);
        let out = solve_ode_batch(model, y.view(), &cfg, &Schedule::uniform(n).unwrap()).unwrap();
        mean_sq(&out, &x0)
    };
    let mse50 = run(50);
    let reduction = 1.0 - mse50 / baseline;
    let (fast, rt) = within(train_time + start.elapsed(), 600.0);
    let c8 = gated(
        reduction >= 0.5 && fast,
        format!(
            "ODE-50 mse {mse50:.4} vs noisy {baseline:.4}, reduction {:.1}% (>= 50%), {rt}",
            100.0 * reduction
        ),
    );
    let q = |mse: f64| -10.0 * mse.log10();
    let (q1, q30) = (q(run(1)), q(run(30)));
    let c9 = Outcome {
        passed: q30 >= q1,
        gated: false,
        detail: format!("quality N=30 {q30:.3} dB vs N=1 {q1:.3} dB (soft: N=30 >= N=1)"),
    };
    (c8, c9)
}

fn audio_stack() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = SynthConfig {
        snr_db_range: [10.0, 10.0],
        ..SynthConfig::default()
    };
    let pair = synth_pair(&cfg, &mut rng).unwrap();

    let spec = stft(&pair.noisy, DEFAULT_WINDOW, DEFAULT_HOP).unwrap();
    let back = istft(&spec).unwrap();
    let rt_err = back
        .samples
        .iter()
        .zip(&pair.noisy.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let est = &pair.noisy.samples;
    let doubled: Vec<f64> = est.iter().map(|v| 2.0 * v).collect();
    let s1 = si_sdr(est, &pair.clean.samples).unwrap();
    let s2 = si_sdr(&doubled, &pair.clean.samples).unwrap();

    let noise_energy: f64 = pair.noise.iter().map(|v| v * v).sum();
    let snr = 10.0 * (pair.clean.energy() / noise_energy).log10();

    let tone: Vec<f64> = (0..16_000).map(|i| (i as f64 * 0.031).sin()).collect();
    let w = Waveform::new(tone, 16_000).unwrap();
    let decoded = decode_wav(&encode_wav(&w).unwrap(), std::path::Path::new("mem")).unwrap();
    let wav_err = w
        .samples
        .iter()
        .zip(&decoded.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let (fast, rt) = within(start.elapsed(), 10.0);
    gated(
        rt_err < 1e-10 && s1 == s2 && (snr - 10.0).abs() < 1e-6 && wav_err <= 1.0 / 32768.0 && fast,
        format!(
            "stft round trip {rt_err:.1e} (< 1e-10), si-sdr(2x)-si-sdr(x) = {:e} (exactly 0), snr error {:.1e} dB (< 1e-6), wav error {wav_err:.2e} (<= {:.2e}), {rt}",
            s2 - s1,
            (snr - 10.0).abs(),
            1.0 / 32768.0
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "schedule algebra", schedule_algebra()),
        (2, "straightness", straightness()),
        (3, "exact-predictor transport", exact_transport()),
        (4, "DDP identity", ddp_identity()),
        (5, "gradient check", gradient_check_all()),
    ];

    let icfm = PathSpec::icfm(0.1).unwrap();
    let (gauss, gauss_time) = train_gaussian(icfm, 20_000);
    results.push((
        6,
        "Gaussian-world end-to-end",
        gaussian_end_to_end(&gauss.model, gauss_time),
    ));
    let (bridge, _) = train_gaussian(PathSpec::sb_ve(2.6, 0.4).unwrap(), 5_000);
    results.push((7, "MMSE floor", mmse_floor(&[&gauss.model, &bridge.model])));

    let start = Instant::now();
    let arcs_cfg = TrainConfig::default();
    let arcs = train(&arcs_cfg, &icfm, &TwoArcs::default(), TRAIN_SEED).unwrap();
    let (c8, c9) = two_arcs_sweep(&arcs.model, start.elapsed());
    results.push((8, "two-arcs toy", c8));
    results.push((9, "steps-sweep trend", c9));
    results.push((10, "audio stack", audio_stack()));

    let mut failed = 0;
    for (id, name, o) in &results {
        let status = match (o.passed, o.gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        println!("criterion {id:>2} [{status}] {name}: {}", o.detail);
        if o.gated && !o.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all gated criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gated criteria failed");
        ExitCode::FAILURE
    }
}
