//! Interpolation weight `beta(t)` and marginal variance for the reference path
//! configurations, printed as a table.
//!
//! `cargo run --example schedule_curves`

use flowse::PathSpec;

fn main() -> flowse::Result<()> {
    let ts = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
    print!("{:<26}", "path");
    for t in ts {
        print!("  {:>10}", format!("beta({t})"));
    }
    println!("  max|beta-t|");
    for spec in PathSpec::reference_configs() {
        print!("{:<26}", spec.to_string());
        for t in ts {
            print!("  {:>10.5}", spec.point(t)?.beta);
        }
        let dev = spec
            .schedule_curve(1001)?
            .iter()
            .map(|p| (p.beta - p.t).abs())
            .fold(0.0, f64::max);
        println!("  {dev:>10.5}");
    }

    println!("\nmarginal variance sigma_{{x_t}}^2:");
    for spec in PathSpec::reference_configs() {
        let vars: Vec<String> = ts
            .iter()
            .map(|&t| format!("{:.4}", spec.point(t).unwrap().var))
            .collect();
        println!("{:<26}  {}", spec.to_string(), vars.join("  "));
    }
    Ok(())
}
