//! Enhancement on the two-arcs toy set: ICFM data prediction, sampled with a
//! 50-step ODE and with DDP, compared with the noisy input.
//!
//! `cargo run --release --example two_arcs [steps]`

use flowse::model::{train, PairSource};
use flowse::oracle::{energy_distance, TwoArcs};
use flowse::sampler::{ddp_infer_batch, solve_ode_batch};
use flowse::{InferenceConfig, LossKind, PathSpec, Schedule, TrainConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn main() -> flowse::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let arcs = TwoArcs::default();
    let path = PathSpec::icfm(0.1)?;
    let cfg = TrainConfig {
        steps,
        ..TrainConfig::default()
    };
    let model = train(&cfg, &path, &arcs, 1)?.model;

    let pairs = arcs.sample_pairs(1000, &mut ChaCha8Rng::seed_from_u64(2))?;
    let x0 = Array2::from_shape_fn((pairs.len(), 2), |(i, j)| pairs.x0()[i][j]);
    let y = Array2::from_shape_fn((pairs.len(), 2), |(i, j)| pairs.y()[i][j]);
    let ode = solve_ode_batch(
        &model,
        y.view(),
        &InferenceConfig::ode(path, LossKind::Dp, 50),
        &Schedule::uniform(50)?,
    )?;
    let ddp = ddp_infer_batch(&model, y.view())?;

    let mse = |a: &Array2<f64>| (a - &x0).mapv(|v| v * v).sum() / a.nrows() as f64;
    let clean = to_rows(&x0);
    println!("{:<10} {:>10} {:>16}", "", "mse", "energy dist.");
    for (name, out) in [("noisy", &y), ("ode-50", &ode), ("ddp", &ddp)] {
        println!(
            "{name:<10} {:>10.4} {:>16.4}",
            mse(out),
            energy_distance(&to_rows(out), &clean)?
        );
    }
    println!("mse reduction (ode-50): {:.1}%", 100.0 * (1.0 - mse(&ode) / mse(&y)));
    Ok(())
}
