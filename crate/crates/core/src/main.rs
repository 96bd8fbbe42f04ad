//! `flowse` command-line front end. All work happens in [`flowse::cli`].

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowse::cli;
use flowse::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "flowse",
    version,
    about = "Flow-based samplers for paired data-to-data translation"
)]
struct Args {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the full default configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the path schedule `t,alpha,beta,var` as CSV.
    Schedule,
    /// Write the held-out evaluation pairs as CSV.
    Dataset,
    /// Train a predictor; writes a checkpoint and the loss trace.
    Train,
    /// Enhance an input (CSV or WAV) or a held-out set; writes metrics JSON.
    Enhance {
        /// Checkpoint file (defaults to `<out>/checkpoint.json`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Clean reference WAV for SI-SDR.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Quality versus number of ODE steps.
    SweepSteps {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the oracle invariant suite.
    OracleCheck,
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
}

fn load(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<()> {
    let stdout = &mut io::stdout().lock();
    let print = |out: &mut dyn Write, text: String| {
        writeln!(out, "{text}").map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
    };
    if args.dump_defaults {
        return print(stdout, RunConfig::default().to_toml());
    }
    let mut cfg = load(&args)?;
    let Some(command) = args.command else {
        return Err(Error::InvalidArgument("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Schedule => {
            let path = cli::cmd_schedule(&cfg)?;
            print(stdout, format!("wrote {}", path.display()))
        }
        Command::Dataset => {
            let path = cli::cmd_dataset(&cfg)?;
            print(stdout, format!("wrote {}", path.display()))
        }
        Command::Train => {
            let s = cli::cmd_train(&cfg)?;
            print(
                stdout,
                format!(
                    "trained {} steps, tail loss {:?}; wrote {}",
                    s.steps,
                    s.tail_loss,
                    s.checkpoint.display()
                ),
            )
        }
        Command::Enhance {
            checkpoint,
            input,
            reference,
        } => {
            cfg.enhance.checkpoint = checkpoint.or(cfg.enhance.checkpoint);
            cfg.enhance.input = input.or(cfg.enhance.input);
            cfg.enhance.reference = reference.or(cfg.enhance.reference);
            let m = cli::cmd_enhance(&cfg)?;
            print(
                stdout,
                format!(
                    "enhanced {} items: mse {:?} (input {:?}), si-sdr {:?} dB (input {:?} dB)",
                    m.n_items, m.mean_mse, m.baseline_mse, m.mean_si_sdr_db, m.baseline_si_sdr_db
                ),
            )
        }
        Command::SweepSteps { checkpoint } => {
            cfg.enhance.checkpoint = checkpoint.or(cfg.enhance.checkpoint);
            for r in cli::cmd_sweep_steps(&cfg)? {
                print(
                    stdout,
                    format!("N={:<3} mse={:.6e} metric={:.3} dB", r.n_steps, r.mse, r.metric_db),
                )?;
            }
            Ok(())
        }
        Command::OracleCheck => cli::cmd_oracle_check(&cfg, stdout).map(|_| ()),
        Command::Gradcheck => cli::cmd_gradcheck(&cfg, stdout).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
