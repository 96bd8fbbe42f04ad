//! The oracle invariant suite with the default configuration, then again with
//! a deliberately corrupted sampler coefficient to show the negative control.
//!
//! `cargo run --release --example oracle_check`

use flowse::cli::cmd_oracle_check;
use flowse::RunConfig;

fn main() {
    let mut out = std::io::stdout();
    let cfg = RunConfig::default();
    println!("default configuration:");
    if let Err(e) = cmd_oracle_check(&cfg, &mut out) {
        println!("unexpected failure: {e}");
    }

    let mut corrupted = cfg;
    corrupted.oracle.corrupt_coefficient = 1e-3;
    println!("\nwith b_n perturbed by 1e-3:");
    match cmd_oracle_check(&corrupted, &mut out) {
        Ok(_) => println!("corruption went undetected"),
        Err(e) => println!("{e} (exit code {})", e.exit_code()),
    }
}
