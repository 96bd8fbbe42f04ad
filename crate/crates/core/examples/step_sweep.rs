//! Quality versus number of Euler steps on the 1-D Gaussian world, for the
//! exact posterior-mean predictor under both bridge standard-deviation
//! conventions and for a briefly trained ICFM model.
//!
//! `cargo run --release --example step_sweep`

use flowse::model::{train, PairSource};
use flowse::oracle::{GaussianWorld, PosteriorMeanPredictor};
use flowse::sampler::{solve_ode_batch, BridgeStd, Predictor};
use flowse::{InferenceConfig, LossKind, PathSpec, Schedule, TrainConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPS: [usize; 7] = [1, 2, 5, 10, 20, 30, 50];

fn sweep(
    p: &dyn Predictor,
    path: PathSpec,
    bridge_std: BridgeStd,
    x0: &Array2<f64>,
    y: &Array2<f64>,
) -> flowse::Result<Vec<f64>> {
    STEPS
        .iter()
        .map(|&n| {
            let cfg = InferenceConfig {
                bridge_std,
                ..InferenceConfig::ode(path, LossKind::Dp, n)
            };
            let out = solve_ode_batch(p, y.view(), &cfg, &Schedule::uniform(n)?)?;
            Ok((&out - x0).mapv(|v| v * v).sum() / out.nrows() as f64)
        })
        .collect()
}

fn main() -> flowse::Result<()> {
    let world = GaussianWorld::standard_1d();
    let pairs = world.sample_pairs(5000, &mut ChaCha8Rng::seed_from_u64(3))?;
    let x0 = Array2::from_shape_fn((pairs.len(), 1), |(i, _)| pairs.x0()[i][0]);
    let y = Array2::from_shape_fn((pairs.len(), 1), |(i, _)| pairs.y()[i][0]);

    let sb = PathSpec::sb_ve(2.6, 0.4)?;
    let icfm = PathSpec::icfm(0.1)?;
    let oracle = |path| PosteriorMeanPredictor {
        world: &world,
        path,
        kind: LossKind::Dp,
    };
    let cfg = TrainConfig {
        steps: 5_000,
        ..TrainConfig::default()
    };
    let trained = train(&cfg, &icfm, &world, 1)?.model;

    let rows = [
        (
            "oracle sb-ve, literal sbar",
            sweep(&oracle(sb), sb, BridgeStd::Difference, &x0, &y)?,
        ),
        (
            "oracle sb-ve, complement sbar",
            sweep(&oracle(sb), sb, BridgeStd::Complement, &x0, &y)?,
        ),
        (
            "oracle icfm",
            sweep(&oracle(icfm), icfm, BridgeStd::default(), &x0, &y)?,
        ),
        (
            "trained icfm (5k steps)",
            sweep(&trained, icfm, BridgeStd::default(), &x0, &y)?,
        ),
    ];
    print!("{:<32}", "mse at N =");
    for n in STEPS {
        print!("{n:>8}");
    }
    println!();
    for (name, mses) in rows {
        print!("{name:<32}");
        for m in mses {
            print!("{m:>8.4}");
        }
        println!();
    }
    println!("MMSE floor: {:.4}", world.mmse_floor());
    Ok(())
}
