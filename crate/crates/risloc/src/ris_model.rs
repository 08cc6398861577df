//! Phase-dependent RIS amplitude model and element weights.
//!
//! A practical RIS element reflects with amplitude
//! `beta(theta) = (1 - beta_min) * ((sin(theta - phi) + 1) / 2)^kappa + beta_min`,
//! which dips to `beta_min` when the programmed phase crosses the circuit
//! resonance. The true element weight is `beta(theta) e^{j theta}`; the ideal
//! model assumed by the estimator keeps the phase but replaces the amplitude
//! by one, which is the `beta_min = 1` special case.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};
use crate::seeds;

/// Circuit constants of the amplitude model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeModel {
    pub beta_min: f64,
    pub phi: f64,
    pub kappa: f64,
}

impl AmplitudeModel {
    /// Requires `0 <= beta_min <= 1`, `phi >= 0`, `kappa >= 0`.
    pub fn new(beta_min: f64, phi: f64, kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta_min) || !beta_min.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta_min must lie in [0, 1], got {beta_min}"
            )));
        }
        if !(phi.is_finite() && phi >= 0.0) {
            return Err(Error::InvalidArgument(format!("phi must be >= 0, got {phi}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be >= 0, got {kappa}"
            )));
        }
        Ok(AmplitudeModel { beta_min, phi, kappa })
    }

    /// Ideal unit-amplitude model.
    pub fn ideal() -> Self {
        AmplitudeModel { beta_min: 1.0, phi: 0.0, kappa: 0.0 }
    }

    /// Reflection amplitude for a programmed phase shift, in [beta_min, 1].
    pub fn amplitude(&self, theta: f64) -> f64 {
        let s = ((theta - self.phi).sin() + 1.0) / 2.0;
        let v = (1.0 - self.beta_min) * s.powf(self.kappa) + self.beta_min;
        v.clamp(self.beta_min, 1.0)
    }
}

/// Which weight model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Hardware weights `beta(theta) e^{j theta}`.
    True,
    /// Ideal unit-amplitude weights `e^{j theta}` assumed by the estimator.
    Assumed,
}

/// T x M matrix of programmed phase shifts in [-pi, pi).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    theta: Vec<f64>,
    n_obs: usize,
    n_elem: usize,
    pub seed: u64,
}

impl PhaseProfile {
    /// Draw a T x M profile of i.i.d. uniform phases on [-pi, pi).
    /// Entries are generated in fixed row-major order, so the result depends
    /// only on the seed.
    pub fn random(n_obs: usize, n_elem: usize, seed: u64) -> Result<Self> {
        if n_obs == 0 || n_elem == 0 {
            return Err(Error::InvalidArgument(format!(
                "profile dimensions must be positive, got {n_obs}x{n_elem}"
            )));
        }
        let mut rng = seeds::rng_from(seed);
        let dist = Uniform::new(-PI, PI);
        let theta = (0..n_obs * n_elem).map(|_| rng.sample(dist)).collect();
        Ok(PhaseProfile { theta, n_obs, n_elem, seed })
    }

    /// Wrap an explicit phase matrix (row-major, T rows of M entries).
    pub fn from_matrix(theta: Vec<f64>, n_obs: usize, n_elem: usize) -> Result<Self> {
        if theta.len() != n_obs * n_elem {
            return Err(Error::InvalidArgument(format!(
                "expected {}x{} = {} phases, got {}",
                n_obs,
                n_elem,
                n_obs * n_elem,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !(-PI..PI).contains(t)) {
            return Err(Error::InvalidArgument(
                "phases must lie in [-pi, pi)".to_string(),
            ));
        }
        Ok(PhaseProfile { theta, n_obs, n_elem, seed: 0 })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    pub fn theta(&self, t: usize, m: usize) -> f64 {
        self.theta[t * self.n_elem + m]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.theta[t * self.n_elem..(t + 1) * self.n_elem]
    }

    /// Dump as CSV with columns t, m, theta for exact replay.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,m,theta")?;
        for t in 0..self.n_obs {
            for m in 0..self.n_elem {
                writeln!(w, "{},{},{:.17e}", t, m, self.theta(t, m))?;
            }
        }
        Ok(())
    }

    /// Load a profile previously written by [`PhaseProfile::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut max_t = 0usize;
        let mut max_m = 0usize;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "t,m,theta" {
                    return Err(Error::InvalidArgument(format!(
                        "unexpected profile CSV header: {line}"
                    )));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidArgument(format!("malformed row: {line}")));
            }
            let t: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad t index: {e}")))?;
            let m: usize = fields[1]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad m index: {e}")))?;
            let th: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad theta: {e}")))?;
            max_t = max_t.max(t);
            max_m = max_m.max(m);
            entries.push((t, m, th));
        }
        let (n_obs, n_elem) = (max_t + 1, max_m + 1);
        if entries.len() != n_obs * n_elem {
            return Err(Error::InvalidArgument(format!(
                "profile CSV has {} entries, expected {}x{}",
                entries.len(),
                n_obs,
                n_elem
            )));
        }
        let mut theta = vec![f64::NAN; n_obs * n_elem];
        for (t, m, th) in entries {
            theta[t * n_elem + m] = th;
        }
        PhaseProfile::from_matrix(theta, n_obs, n_elem)
    }
}

/// Dense row-major T x M complex weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    data: Vec<Complex64>,
    n_obs: usize,
    n_elem: usize,
}

impl Weights {
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_elem(&self) -> usize {
        self.n_elem
    }

    pub fn row(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.n_elem..(t + 1) * self.n_elem]
    }

    pub fn entry(&self, t: usize, m: usize) -> Complex64 {
        self.data[t * self.n_elem + m]
    }
}

/// Materialize the true or assumed weights for a phase profile.
pub fn make_weights(profile: &PhaseProfile, model: &AmplitudeModel, mode: WeightMode) -> Weights {
    let n = profile.n_obs() * profile.n_elem();
    let mut data = Vec::with_capacity(n);
    for t in 0..profile.n_obs() {
        for &theta in profile.row(t) {
            let amp = match mode {
                WeightMode::True => model.amplitude(theta),
                WeightMode::Assumed => 1.0,
            };
            data.push(Complex64::from_polar(amp, theta));
        }
    }
    Weights { data, n_obs: profile.n_obs(), n_elem: profile.n_elem() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn amplitude_is_one_when_beta_min_is_one() {
        let m = AmplitudeModel::new(1.0, 0.3, 2.0).unwrap();
        for theta in [-3.0, -0.5, 0.0, 1.2, 3.1] {
            assert_eq!(m.amplitude(theta), 1.0);
        }
    }

    #[test]
    fn amplitude_extremes_at_quarter_turns() {
        let m = AmplitudeModel::new(0.2, 0.7, 3.0).unwrap();
        assert_relative_eq!(m.amplitude(m.phi + PI / 2.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.amplitude(m.phi - PI / 2.0), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn amplitude_hand_value() {
        // beta_min = 0.2, phi = 0, kappa = 2, theta = 0: 0.8 * 0.25 + 0.2 = 0.4.
        let m = AmplitudeModel::new(0.2, 0.0, 2.0).unwrap();
        assert_relative_eq!(m.amplitude(0.0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn kappa_zero_is_unit_amplitude() {
        let m = AmplitudeModel::new(0.1, 0.4, 0.0).unwrap();
        for theta in [-PI, -1.0, 0.0, 0.4 - PI / 2.0, 2.0] {
            assert_eq!(m.amplitude(theta), 1.0);
        }
    }

    #[test]
    fn model_constructor_validates_ranges() {
        assert!(AmplitudeModel::new(-0.1, 0.0, 2.0).is_err());
        assert!(AmplitudeModel::new(1.1, 0.0, 2.0).is_err());
        assert!(AmplitudeModel::new(0.5, -1.0, 2.0).is_err());
        assert!(AmplitudeModel::new(0.5, 0.0, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn amplitude_bounded_and_periodic(
            beta_min in 0.0f64..=1.0,
            phi in 0.0f64..3.0,
            kappa in 0.0f64..6.0,
            theta in -10.0f64..10.0,
        ) {
            let m = AmplitudeModel::new(beta_min, phi, kappa).unwrap();
            let v = m.amplitude(theta);
            prop_assert!(v >= beta_min && v <= 1.0);
            let w = m.amplitude(theta + 2.0 * PI);
            prop_assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_share_phase_and_differ_in_modulus() {
        let profile = PhaseProfile::random(3, 7, 42).unwrap();
        let model = AmplitudeModel::new(0.2, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        for t in 0..3 {
            for m in 0..7 {
                let theta = profile.theta(t, m);
                assert_relative_eq!(wa.entry(t, m).norm(), 1.0, epsilon = 1e-14);
                assert_relative_eq!(wt.entry(t, m).norm(), model.amplitude(theta), epsilon = 1e-14);
                assert_relative_eq!(wa.entry(t, m).arg(), theta, epsilon = 1e-12);
                assert_relative_eq!(wt.entry(t, m).arg(), theta, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn true_equals_assumed_when_beta_min_is_one() {
        let profile = PhaseProfile::random(2, 5, 3).unwrap();
        let model = AmplitudeModel::new(1.0, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        assert_eq!(wt, wa);
    }

    #[test]
    fn true_weight_hand_value() {
        let profile = PhaseProfile::from_matrix(vec![0.0], 1, 1).unwrap();
        let model = AmplitudeModel::new(0.2, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        assert!((wt.entry(0, 0) - Complex64::new(0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn random_profile_is_deterministic_and_in_range() {
        let a = PhaseProfile::random(4, 11, 9).unwrap();
        let b = PhaseProfile::random(4, 11, 9).unwrap();
        assert_eq!(a, b);
        let c = PhaseProfile::random(4, 11, 10).unwrap();
        assert_ne!(a, c);
        for t in 0..4 {
            for m in 0..11 {
                let th = a.theta(t, m);
                assert!((-PI..PI).contains(&th));
            }
        }
    }

    #[test]
    fn random_profile_sample_mean_is_near_zero() {
        let p = PhaseProfile::random(1000, 1000, 2024).unwrap();
        let mean: f64 = (0..1000)
            .map(|t| p.row(t).iter().sum::<f64>())
            .sum::<f64>()
            / 1e6;
        assert!(mean.abs() < 0.01, "sample mean {mean} too far from 0");
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = PhaseProfile::random(3, 4, 77).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = PhaseProfile::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p.n_obs(), q.n_obs());
        assert_eq!(p.n_elem(), q.n_elem());
        for t in 0..3 {
            for m in 0..4 {
                assert_eq!(p.theta(t, m), q.theta(t, m));
            }
        }
    }
}
