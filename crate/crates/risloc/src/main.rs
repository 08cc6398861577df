//! Thin CLI over the sweep drivers in [`risloc::experiments`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use risloc::error::Error;
use risloc::experiments::{
    run_pseudo_true, run_sweep_beta, run_sweep_size, run_sweep_snr, run_verify,
    ExperimentConfig, SweepOutput,
};

#[derive(Parser)]
#[command(
    name = "risloc",
    about = "Localization bounds and mismatched ML estimation for RIS-aided positioning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of random phase profiles (overrides the config).
    #[arg(long, global = true)]
    profiles: Option<usize>,

    /// Number of Monte Carlo trials per SNR point (overrides the config).
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Use publication-scale repetitions (200 profiles, 1000 trials).
    #[arg(long, global = true)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds versus amplitude floor, one row per (beta_min, SNR, profile).
    SweepBeta,
    /// Profile-averaged bounds versus RIS size at a single SNR.
    SweepSize,
    /// Bounds and empirical MML RMSE versus SNR on one fixed profile.
    SweepSnr,
    /// Pseudo-true parameters and bound scalars with diagnostics.
    PseudoTrue,
    /// Run the numerical invariant checks and report pass/fail lines.
    Verify,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    if cli.full_scale {
        cfg.run.n_profiles = 200;
        cfg.run.n_trials = 1000;
    }
    if let Some(profiles) = cli.profiles {
        cfg.run.n_profiles = profiles;
    }
    if let Some(trials) = cli.trials {
        cfg.run.n_trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(cfg: &ExperimentConfig, out: SweepOutput) -> Result<(), Error> {
    let dir = PathBuf::from(&cfg.output.dir);
    let paths = out.write(&dir, &cfg.output.formats)?;
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::SweepBeta => run_sweep_beta(&cfg).and_then(|o| write_output(&cfg, o)),
        Command::SweepSize => run_sweep_size(&cfg).and_then(|o| write_output(&cfg, o)),
        Command::SweepSnr => run_sweep_snr(&cfg).and_then(|o| write_output(&cfg, o)),
        Command::PseudoTrue => run_pseudo_true(&cfg).and_then(|o| write_output(&cfg, o)),
        Command::Verify => match run_verify(&cfg) {
            Ok(report) => {
                print!("{}", report.render());
                if report.all_passed() {
                    Ok(())
                } else {
                    return ExitCode::from(1);
                }
            }
            Err(e) => Err(e),
        },
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
