//! Declarative experiment configs, sweep drivers, and the verify command.

mod config;
mod sweeps;
mod verify;

pub use config::{
    ExperimentConfig, ModelSection, OutputSection, RunSection, SceneSection, SignalSection,
};
pub use sweeps::{
    fmt_float, run_pseudo_true, run_sweep_beta, run_sweep_size, run_sweep_snr, SweepOutput,
};
pub use verify::{run_verify, CheckResult, VerifyReport};
