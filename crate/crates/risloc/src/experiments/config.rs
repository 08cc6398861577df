//! Declarative experiment configuration.
//!
//! A single TOML file with nested sections drives every sweep. Unknown keys
//! are hard errors, all lists must be non-empty, and every random quantity
//! derives from `run.master_seed`. Defaults reproduce the reference setup:
//! a 50x50 RIS at 28 GHz with half-wavelength spacing, the BS at
//! 5.77 (-1, 1, 1) m, the UE 5 m from the RIS center along (1, 1, 1),
//! T = 50 transmissions, kappa = 2, phi = 0, and unit pilot energy.

use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimator::{JacobiSettings, MmlSettings};
use crate::geometry::{SceneConfig, SPEED_OF_LIGHT};
use crate::optim::OptimizerSettings;
use crate::ris_model::AmplitudeModel;
use crate::signal::ParameterVector;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub carrier_hz: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub spacing_m: Option<f64>,
    pub p_ris: [f64; 3],
    pub p_bs: [f64; 3],
    /// UE distances from the RIS center along (1, 1, 1)/sqrt(3), meters.
    pub ue_distance: Vec<f64>,
    /// Element counts for the size sweep; each must be a perfect square.
    pub ris_sizes: Vec<usize>,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            carrier_hz: Some(28e9),
            wavelength_m: None,
            ris_rows: 50,
            ris_cols: 50,
            spacing_m: None,
            p_ris: [0.0, 0.0, 0.0],
            p_bs: [-5.77, 5.77, 5.77],
            ue_distance: vec![5.0],
            ris_sizes: vec![900, 2025, 4900],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Amplitude floors to sweep.
    pub beta_min: Vec<f64>,
    pub phi: f64,
    pub kappa: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { beta_min: vec![0.3, 0.7], phi: 0.0, kappa: 2.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    /// Number of transmissions T.
    pub t: usize,
    /// Pilot energy E_s.
    pub e_s: f64,
    pub snr_db: Vec<f64>,
    /// Channel gain as [re, im].
    pub alpha: [f64; 2],
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            t: 50,
            e_s: 1.0,
            snr_db: vec![-10.0, -7.5, -5.0, -2.5, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            alpha: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Root of every derived random stream. No wall-clock seeding exists.
    pub master_seed: u64,
    pub n_profiles: usize,
    pub n_trials: usize,
    pub n_starts: usize,
    pub max_iters: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub jacobi_terms: usize,
    pub mml_distance_max_m: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            master_seed: 1,
            n_profiles: 20,
            n_trials: 100,
            n_starts: 10,
            max_iters: 2000,
            x_tol: 1e-7,
            f_tol: 1e-12,
            jacobi_terms: 5,
            mml_distance_max_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Supported: "csv" (always available) and "gnuplot" (.dat variant).
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".to_string(), formats: vec!["csv".to_string()] }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene: SceneSection,
    pub model: ModelSection,
    pub signal: SignalSection,
    pub run: RunSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parse and validate a TOML config; parse errors keep their line/column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        match (s.carrier_hz, s.wavelength_m) {
            (None, None) => {
                return Err(Error::Config(
                    "scene needs carrier_hz or wavelength_m".to_string(),
                ))
            }
            (Some(f), Some(l)) => {
                if (f * l / SPEED_OF_LIGHT - 1.0).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "carrier_hz = {f} and wavelength_m = {l} disagree with the speed of light"
                    )));
                }
            }
            _ => {}
        }
        if s.ris_rows == 0 || s.ris_cols == 0 {
            return Err(Error::Config("ris_rows and ris_cols must be positive".into()));
        }
        if s.ue_distance.len() != 1 {
            return Err(Error::Config(format!(
                "exactly one ue_distance per run (got {})",
                s.ue_distance.len()
            )));
        }
        if s.ue_distance[0] <= 0.0 {
            return Err(Error::Config("ue_distance must be positive".into()));
        }
        if s.ris_sizes.is_empty() {
            return Err(Error::Config("ris_sizes must be non-empty".into()));
        }
        for &m in &s.ris_sizes {
            let side = (m as f64).sqrt().round() as usize;
            if side * side != m || m == 0 {
                return Err(Error::Config(format!(
                    "ris_sizes entries must be perfect squares, got {m}"
                )));
            }
        }
        if self.model.beta_min.is_empty() {
            return Err(Error::Config("model.beta_min must be non-empty".into()));
        }
        for &b in &self.model.beta_min {
            AmplitudeModel::new(b, self.model.phi, self.model.kappa)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.signal.t == 0 {
            return Err(Error::Config("signal.t must be positive".into()));
        }
        if !(self.signal.e_s > 0.0) {
            return Err(Error::Config("signal.e_s must be positive".into()));
        }
        if self.signal.snr_db.is_empty() {
            return Err(Error::Config("signal.snr_db must be non-empty".into()));
        }
        let r = &self.run;
        if r.n_profiles == 0 || r.n_trials == 0 || r.n_starts == 0 {
            return Err(Error::Config(
                "run.n_profiles, run.n_trials and run.n_starts must be positive".into(),
            ));
        }
        if !(r.x_tol > 0.0 && r.f_tol > 0.0) {
            return Err(Error::Config("run tolerances must be positive".into()));
        }
        if r.jacobi_terms == 0 {
            return Err(Error::Config("run.jacobi_terms must be positive".into()));
        }
        if !(r.mml_distance_max_m > 0.0) {
            return Err(Error::Config("run.mml_distance_max_m must be positive".into()));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "gnuplot" {
                return Err(Error::Config(format!(
                    "unsupported output format {f:?} (use \"csv\" or \"gnuplot\")"
                )));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        match (self.scene.carrier_hz, self.scene.wavelength_m) {
            (_, Some(l)) => l,
            (Some(f), None) => SPEED_OF_LIGHT / f,
            (None, None) => unreachable!("validated"),
        }
    }

    /// Build the scene, optionally overriding the grid side length (for the
    /// size sweep).
    pub fn scene(&self, side_override: Option<usize>) -> Result<SceneConfig> {
        let rows = side_override.unwrap_or(self.scene.ris_rows);
        let cols = side_override.unwrap_or(self.scene.ris_cols);
        let d = self.scene.ue_distance[0];
        let p_ris = Vector3::from(self.scene.p_ris);
        let dir = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        SceneConfig::from_wavelength(
            self.wavelength(),
            rows,
            cols,
            self.scene.spacing_m,
            p_ris,
            Vector3::from(self.scene.p_bs),
            p_ris + d * dir,
        )
    }

    pub fn amplitude_model(&self, beta_min: f64) -> Result<AmplitudeModel> {
        AmplitudeModel::new(beta_min, self.model.phi, self.model.kappa)
    }

    pub fn eta_true(&self, scene: &SceneConfig) -> ParameterVector {
        ParameterVector::new(
            Complex64::new(self.signal.alpha[0], self.signal.alpha[1]),
            scene.p_ue_true,
        )
    }

    pub fn optimizer_settings(&self, start_seed: u64) -> OptimizerSettings {
        OptimizerSettings {
            max_iters: self.run.max_iters,
            x_tol: self.run.x_tol,
            f_tol: self.run.f_tol,
            n_starts: self.run.n_starts,
            start_seed,
            ..Default::default()
        }
    }

    pub fn mml_settings(&self, seed: u64) -> MmlSettings {
        MmlSettings {
            optimizer: self.optimizer_settings(seed),
            jacobi: JacobiSettings { n_terms: self.run.jacobi_terms, ..Default::default() },
            distance_max_m: self.run.mml_distance_max_m,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_reference_setup() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let scene = cfg.scene(None).unwrap();
        assert_eq!(scene.num_elements(), 2500);
        assert!((scene.wavelength_m - SPEED_OF_LIGHT / 28e9).abs() < 1e-12);
        assert!((scene.spacing_m - scene.wavelength_m / 2.0).abs() < 1e-12);
        assert!((scene.p_ue_true.norm() - 5.0).abs() < 1e-12);
        assert_eq!(cfg.signal.t, 50);
    }

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.run.n_profiles, 20);
        assert_eq!(cfg.scene.ris_rows, 50);
    }

    #[test]
    fn unknown_keys_are_hard_errors_with_location() {
        let err = ExperimentConfig::from_toml_str("[model]\nbeta_mim = [0.5]\n").unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("beta_mim"), "message should name the bad key: {msg}");
                assert!(msg.contains("line"), "message should carry a location: {msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_carrier_and_wavelength_rejected() {
        let err = ExperimentConfig::from_toml_str(
            "[scene]\ncarrier_hz = 28e9\nwavelength_m = 0.02\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn non_square_ris_size_rejected() {
        let err =
            ExperimentConfig::from_toml_str("[scene]\nris_sizes = [2500, 2501]\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_beta_rejected() {
        let err = ExperimentConfig::from_toml_str("[model]\nbeta_min = [1.5]\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn overrides_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [scene]
            ris_rows = 10
            ris_cols = 10
            ue_distance = [2.0]

            [model]
            beta_min = [0.0, 0.5, 1.0]

            [signal]
            t = 25
            snr_db = [20.0, 30.0, 40.0]

            [run]
            master_seed = 42
            n_profiles = 5

            [output]
            dir = "results"
            formats = ["csv", "gnuplot"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.master_seed, 42);
        assert_eq!(cfg.scene(None).unwrap().num_elements(), 100);
        assert_eq!(cfg.model.beta_min.len(), 3);
        assert_eq!(cfg.output.dir, "results");
    }
}
