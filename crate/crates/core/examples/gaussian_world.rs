//! Trains an ICFM data-prediction model on the 1-D Gaussian world and compares
//! its one-step (DDP) output with the analytic MMSE floor `E[x0 | y] = y / 2`.
//!
//! `cargo run --release --example gaussian_world [steps]`

use flowse::model::{train, PairSource};
use flowse::oracle::GaussianWorld;
use flowse::sampler::ddp_infer_batch;
use flowse::{LossKind, PathSpec, TrainConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowse::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let world = GaussianWorld::standard_1d();
    let path = PathSpec::icfm(0.1)?;
    let cfg = TrainConfig {
        steps,
        loss_kind: LossKind::Dp,
        ..TrainConfig::default()
    };
    let outcome = train(&cfg, &path, &world, 1)?;
    let tail = &outcome.loss_trace[outcome.loss_trace.len().saturating_sub(500)..];
    println!(
        "trained {steps} steps, mean loss over the last {} steps: {:.4}",
        tail.len(),
        tail.iter().sum::<f64>() / tail.len() as f64
    );

    let pairs = world.sample_pairs(10_000, &mut ChaCha8Rng::seed_from_u64(2))?;
    let y = Array2::from_shape_fn((pairs.len(), 1), |(i, _)| pairs.y()[i][0]);
    let out = ddp_infer_batch(&outcome.model, y.view())?;
    let n = pairs.len() as f64;
    let mse = pairs
        .x0()
        .iter()
        .zip(&out)
        .map(|(x, o)| (o - x[0]).powi(2))
        .sum::<f64>()
        / n;
    let cond = pairs.iter().map(|(x, y)| (y[0] / 2.0 - x[0]).powi(2)).sum::<f64>() / n;
    println!("DDP mse            {mse:.5}");
    println!("E[x0|y] mse        {cond:.5} (same pairs)");
    println!("analytic floor     {:.5}", world.mmse_floor());
    println!("excess over floor  {:+.2}%", 100.0 * (mse / world.mmse_floor() - 1.0));
    for y in [-2.0, 0.0, 1.0, 2.0] {
        let f = flowse::ddp_infer(&outcome.model, &[y])?;
        println!("  y = {y:+.1}: model {:+.4}, E[x0|y] {:+.4}", f[0], y / 2.0);
    }
    Ok(())
}
