//! Analytic gradients against central finite differences, for every valid
//! (path, loss) pair and a range of step sizes. Small `h` agrees to ~1e-6;
//! large `h` shows the truncation error growing.
//!
//! `cargo run --example gradcheck`

use flowse::model::{draw_training_inputs, gradient_check, ModelShape, PairSource};
use flowse::oracle::GaussianWorld;
use flowse::paths::NoiseDomain;
use flowse::{LossKind, PathSpec, PredictorModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let world = GaussianWorld::isotropic(2, 1.0, 0.5)?;
    let combos = [
        (PathSpec::icfm(0.1)?, LossKind::Dp),
        (PathSpec::icfm(0.1)?, LossKind::Fm),
        (PathSpec::sb_ve(2.6, 0.4)?, LossKind::Dp),
        (PathSpec::sb_sv(0.99, 0.1)?, LossKind::Dp),
    ];
    let hs = [1e-1, 1e-3, 1e-5, 1e-6, 1e-7];
    print!("{:<26} {:<4}", "path", "loss");
    for h in hs {
        print!(" {:>10}", format!("h={h:e}"));
    }
    println!();
    for (path, kind) in combos {
        let mut model = PredictorModel::new(ModelShape::new(2), kind, path, &mut rng)?;
        model.randomize_head(0.3, &mut rng);
        let batch = world.sample_pairs(8, &mut rng)?;
        let inputs = draw_training_inputs(&batch, &path, kind, 0.0, NoiseDomain::Real, &mut rng)?;
        print!("{:<26} {:<4}", path.to_string(), kind.to_string());
        for h in hs {
            let report = gradient_check(&model, &inputs, h, 100, &mut ChaCha8Rng::seed_from_u64(1))?;
            print!(" {:>10.2e}", report.max_rel_error);
        }
        println!();
    }
    Ok(())
}
