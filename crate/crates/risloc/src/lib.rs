//! Localization error bounds for RIS-aided near-field positioning under
//! phase-dependent amplitude impairments.
//!
//! A reconfigurable intelligent surface (RIS) reflects a narrowband pilot from
//! a single-antenna base station towards a single-antenna user, and the user
//! position is estimated from the wavefront curvature across the surface. Real
//! RIS elements do not apply a pure phase shift: the reflection amplitude dips
//! as the programmed phase sweeps through the circuit resonance. When an
//! estimator assumes unit amplitudes while the hardware follows the practical
//! amplitude model, the estimation problem is misspecified. This crate
//! quantifies the resulting performance loss:
//!
//! - [`geometry`] builds the element grid and evaluates near-field steering
//!   vectors and the combined BS-RIS-UE response.
//! - [`ris_model`] implements the phase-dependent amplitude model, the true
//!   and assumed element weights, and random phase profiles.
//! - [`signal`] provides noise-free observation models, SNR-calibrated noise
//!   generation, and the closed-form KL divergence between the two laws.
//! - [`derivatives`] carries the analytic first/second derivatives of the
//!   mean vector used by the bound matrices, plus finite-difference checks.
//! - [`optim`] is a multi-start Nelder-Mead minimizer for the concentrated
//!   three-dimensional position searches.
//! - [`bounds`] computes the pseudo-true parameter, the misspecified
//!   Cramér-Rao bound (MCRB), the lower bound (LB) with its bias floor, and
//!   the classical CRB baseline.
//! - [`bessel`] evaluates integer-order Bessel functions of the first kind.
//! - [`estimator`] implements the mismatched maximum-likelihood estimator
//!   with Jacobi-Anger angle initialization and Monte Carlo RMSE evaluation.
//! - [`experiments`] loads declarative sweep configs and reproduces the
//!   bound/estimator sweeps as deterministic CSV artifacts.
//!
//! Runnable walkthroughs for each capability live in `examples/`; the thin
//! `risloc` binary exposes the sweeps as subcommands.

pub mod bessel;
pub mod bounds;
pub mod derivatives;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod optim;
pub mod ris_model;
pub mod seeds;
pub mod signal;

mod cvec;

pub use bounds::{BoundsReport, CrbReport, MismatchReport, PseudoTrue};
pub use error::{Error, Result};
pub use estimator::{AngleEstimate, EstimationResult, MmlSettings, RmseResult};
pub use geometry::SceneConfig;
pub use optim::OptimizerSettings;
pub use ris_model::{AmplitudeModel, PhaseProfile, WeightMode, Weights};
pub use signal::{ObservationSet, ParameterVector};
