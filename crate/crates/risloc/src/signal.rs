//! Observation model: noise-free means, SNR calibration, noise synthesis,
//! and the KL divergence between the true and assumed observation laws.
//!
//! One observation per transmission: `y_t = alpha * b(p)^T w_t * s_t + n_t`
//! with circular complex Gaussian noise of variance `N0` per sample (N0/2 per
//! real dimension) and constant pilot `s_t = sqrt(E_s)`.

use std::io::{BufRead, Write};

use nalgebra::{SVector, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cvec;
use crate::error::{Error, Result};
use crate::geometry::SceneConfig;
use crate::ris_model::Weights;

/// Estimation parameter eta = [alpha_re, alpha_im, x, y, z]: complex channel
/// gain plus UE position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub position: Vector3<f64>,
}

impl ParameterVector {
    pub fn new(alpha: Complex64, position: Vector3<f64>) -> Self {
        ParameterVector { alpha_re: alpha.re, alpha_im: alpha.im, position }
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha_re, self.alpha_im)
    }

    /// Stack as the 5-vector [alpha_re, alpha_im, x, y, z].
    pub fn as_vector5(&self) -> SVector<f64, 5> {
        SVector::<f64, 5>::from([
            self.alpha_re,
            self.alpha_im,
            self.position.x,
            self.position.y,
            self.position.z,
        ])
    }
}

/// One batch of T received samples with its noise and pilot levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: Vec<Complex64>,
    pub noise_var: f64,
    pub pilot_energy: f64,
}

impl ObservationSet {
    /// Dump as CSV with columns t, re, im for estimator replay.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re,im")?;
        for (t, y) in self.y.iter().enumerate() {
            writeln!(w, "{},{:.17e},{:.17e}", t, y.re, y.im)?;
        }
        Ok(())
    }

    /// Load samples previously written by [`ObservationSet::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, noise_var: f64, pilot_energy: f64) -> Result<Self> {
        let mut y = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "t,re,im" {
                    return Err(Error::InvalidArgument(format!(
                        "unexpected observation CSV header: {line}"
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
            let re: f64 = fields[1]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad re: {e}")))?;
            let im: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad im: {e}")))?;
            y.push(Complex64::new(re, im));
        }
        Ok(ObservationSet { y, noise_var, pilot_energy })
    }
}

/// Noise-free mean vector: entry t equals `alpha * (b(p)^T w_t) * sqrt(E_s)`.
///
/// Works for both the true and the assumed weight matrix.
pub fn noise_free_mean(
    scene: &SceneConfig,
    eta: &ParameterVector,
    weights: &Weights,
    pilot_energy: f64,
) -> Result<Vec<Complex64>> {
    let b = scene.combined_response(eta.position)?;
    let s = pilot_energy.sqrt();
    let alpha = eta.alpha();
    let mut mu = Vec::with_capacity(weights.n_obs());
    for t in 0..weights.n_obs() {
        let bw: Complex64 = weights
            .row(t)
            .iter()
            .zip(&b)
            .map(|(w, bm)| w * bm)
            .sum();
        mu.push(alpha * bw * s);
    }
    Ok(mu)
}

/// Noise variance N0 that realizes a target SNR in dB, where
/// `SNR = E_s |alpha|^2 / (T N0) * sum_t |b(p)^T w_t|^2`
/// is evaluated with the true weights at the true parameter.
pub fn noise_var_for_snr(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    true_weights: &Weights,
    snr_db: f64,
    pilot_energy: f64,
) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr_db must be finite, got {snr_db}")));
    }
    let b = scene.combined_response(eta_true.position)?;
    let mut energy = 0.0;
    for t in 0..true_weights.n_obs() {
        let bw: Complex64 = true_weights
            .row(t)
            .iter()
            .zip(&b)
            .map(|(w, bm)| w * bm)
            .sum();
        energy += bw.norm_sqr();
    }
    if energy <= 0.0 {
        return Err(Error::DegenerateChannel(
            "all effective channel coefficients are zero".to_string(),
        ));
    }
    let snr_lin = 10f64.powf(snr_db / 10.0);
    let t = true_weights.n_obs() as f64;
    Ok(pilot_energy * eta_true.alpha().norm_sqr() * energy / (t * snr_lin))
}

/// Draw observations under the true model: `y = mu + n` with circular complex
/// Gaussian noise of per-sample variance `noise_var` (N0/2 per real part).
pub fn simulate<R: Rng>(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    true_weights: &Weights,
    pilot_energy: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let mu = noise_free_mean(scene, eta_true, true_weights, pilot_energy)?;
    let sigma = (noise_var / 2.0).sqrt();
    let y = mu
        .into_iter()
        .map(|m| {
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            m + Complex64::new(sigma * nr, sigma * ni)
        })
        .collect();
    Ok(ObservationSet { y, noise_var, pilot_energy })
}

/// Closed-form KL divergence between the true law at `eta_true` and the
/// assumed law at `eta`: equal-covariance complex Gaussians give
/// `D = || mu(eta_true) - mu_assumed(eta) ||^2 / N0`.
pub fn kl_divergence(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    eta: &ParameterVector,
    true_weights: &Weights,
    assumed_weights: &Weights,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<f64> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let mu_true = noise_free_mean(scene, eta_true, true_weights, pilot_energy)?;
    let mu_assumed = noise_free_mean(scene, eta, assumed_weights, pilot_energy)?;
    let diff_sq: f64 = mu_true
        .iter()
        .zip(&mu_assumed)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(diff_sq / noise_var)
}

/// Euclidean distance between the two model means; the KL divergence is its
/// square over N0, so both rank candidate parameters identically.
pub fn mean_mismatch_norm(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    eta: &ParameterVector,
    true_weights: &Weights,
    assumed_weights: &Weights,
    pilot_energy: f64,
) -> Result<f64> {
    let mu_true = noise_free_mean(scene, eta_true, true_weights, pilot_energy)?;
    let mu_assumed = noise_free_mean(scene, eta, assumed_weights, pilot_energy)?;
    let diff: Vec<Complex64> = mu_true.iter().zip(&mu_assumed).map(|(a, b)| a - b).collect();
    Ok(cvec::norm(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris_model::{make_weights, AmplitudeModel, PhaseProfile, WeightMode};
    use crate::seeds;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn small_scene(n_obs: usize, rows: usize, cols: usize) -> (SceneConfig, PhaseProfile) {
        let scene = SceneConfig::from_wavelength(
            0.1,
            rows,
            cols,
            None,
            Vector3::zeros(),
            Vector3::new(-0.4, 0.5, 0.6),
            Vector3::new(0.3, 0.2, 0.5),
        )
        .unwrap();
        let profile = PhaseProfile::random(n_obs, rows * cols, 11).unwrap();
        (scene, profile)
    }

    #[test]
    fn mean_is_linear_in_alpha() {
        let (scene, profile) = small_scene(4, 2, 2);
        let model = AmplitudeModel::new(0.3, 0.0, 2.0).unwrap();
        let w = make_weights(&profile, &model, WeightMode::True);
        let p = scene.p_ue_true;

        let zero = ParameterVector::new(Complex64::new(0.0, 0.0), p);
        let mu0 = noise_free_mean(&scene, &zero, &w, 1.0).unwrap();
        assert!(mu0.iter().all(|m| m.norm() == 0.0));

        let one = ParameterVector::new(Complex64::new(1.0, 0.0), p);
        let two = ParameterVector::new(Complex64::new(2.0, 0.0), p);
        let mu1 = noise_free_mean(&scene, &one, &w, 1.0).unwrap();
        let mu2 = noise_free_mean(&scene, &two, &w, 1.0).unwrap();
        for (a, b) in mu1.iter().zip(&mu2) {
            assert!((2.0 * a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_term_mean_hand_value() {
        // One element at the RIS center, one observation, theta = 0, so
        // b = 1, w = 1 and mu = alpha sqrt(E_s).
        let scene = SceneConfig::from_wavelength(
            1.0,
            1,
            1,
            Some(1.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let profile = PhaseProfile::from_matrix(vec![0.0], 1, 1).unwrap();
        let w = make_weights(&profile, &AmplitudeModel::ideal(), WeightMode::Assumed);
        let eta = ParameterVector::new(Complex64::new(0.7, -0.2), scene.p_ue_true);
        let mu = noise_free_mean(&scene, &eta, &w, 4.0).unwrap();
        assert!((mu[0] - Complex64::new(1.4, -0.4)).norm() < 1e-14);
    }

    #[test]
    fn noise_var_matches_snr_definition() {
        let (scene, profile) = small_scene(5, 3, 3);
        let model = AmplitudeModel::new(0.4, 0.1, 2.0).unwrap();
        let w = make_weights(&profile, &model, WeightMode::True);
        let eta = ParameterVector::new(Complex64::new(0.8, 0.3), scene.p_ue_true);

        let n0 = noise_var_for_snr(&scene, &eta, &w, 7.0, 2.0).unwrap();
        // Recompute the SNR from its definition.
        let b = scene.combined_response(eta.position).unwrap();
        let energy: f64 = (0..5)
            .map(|t| {
                w.row(t)
                    .iter()
                    .zip(&b)
                    .map(|(wm, bm)| wm * bm)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum();
        let snr = 2.0 * eta.alpha().norm_sqr() * energy / (5.0 * n0);
        assert_relative_eq!(10.0 * snr.log10(), 7.0, epsilon = 1e-10);

        // Doubling E_s doubles N0 at fixed SNR.
        let n0_double = noise_var_for_snr(&scene, &eta, &w, 7.0, 4.0).unwrap();
        assert_relative_eq!(n0_double, 2.0 * n0, max_relative = 1e-12);
        // +20 dB divides N0 by 100.
        let n0_up = noise_var_for_snr(&scene, &eta, &w, 27.0, 2.0).unwrap();
        assert_relative_eq!(n0_up, n0 / 100.0, max_relative = 1e-12);
    }

    #[test]
    fn noise_var_unit_case() {
        // T = 1, |b^T w|^2 = 1, |alpha| = 1, E_s = 1, SNR = 0 dB -> N0 = 1.
        let scene = SceneConfig::from_wavelength(
            1.0,
            1,
            1,
            Some(1.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let profile = PhaseProfile::from_matrix(vec![0.5], 1, 1).unwrap();
        let w = make_weights(&profile, &AmplitudeModel::ideal(), WeightMode::Assumed);
        let eta = ParameterVector::new(Complex64::new(1.0, 0.0), scene.p_ue_true);
        let n0 = noise_var_for_snr(&scene, &eta, &w, 0.0, 1.0).unwrap();
        assert_relative_eq!(n0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn simulated_noise_has_requested_moments() {
        let (scene, profile) = small_scene(2, 2, 2);
        let model = AmplitudeModel::new(0.5, 0.0, 2.0).unwrap();
        let w = make_weights(&profile, &model, WeightMode::True);
        let eta = ParameterVector::new(Complex64::new(1.0, 0.0), scene.p_ue_true);
        let mu = noise_free_mean(&scene, &eta, &w, 1.0).unwrap();

        let n0 = 0.09;
        let n_draws = 100_000;
        let mut rng = seeds::rng_from(123);
        let mut sum = vec![Complex64::new(0.0, 0.0); 2];
        let mut sum_sq = vec![0.0f64; 2];
        for _ in 0..n_draws {
            let obs = simulate(&scene, &eta, &w, 1.0, n0, &mut rng).unwrap();
            for t in 0..2 {
                let d = obs.y[t] - mu[t];
                sum[t] += d;
                sum_sq[t] += d.norm_sqr();
            }
        }
        for t in 0..2 {
            let mean = sum[t] / n_draws as f64;
            let var = sum_sq[t] / n_draws as f64;
            // Mean within 5 sigma bands of zero.
            let band = 5.0 * (n0 / (2.0 * n_draws as f64)).sqrt();
            assert!(mean.re.abs() < band && mean.im.abs() < band);
            // Empirical per-sample variance within 2%.
            assert_relative_eq!(var, n0, max_relative = 0.02);
        }
    }

    #[test]
    fn kl_is_zero_without_mismatch_at_true_parameter() {
        let (scene, profile) = small_scene(3, 2, 2);
        let model = AmplitudeModel::new(1.0, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        let eta = ParameterVector::new(Complex64::new(0.9, 0.1), scene.p_ue_true);
        let d = kl_divergence(&scene, &eta, &eta, &wt, &wa, 1.0, 0.3).unwrap();
        assert!(d.abs() < 1e-20, "expected zero KL, got {d}");
    }

    #[test]
    fn kl_scales_quadratically_with_both_means() {
        let (scene, profile) = small_scene(3, 2, 2);
        let model = AmplitudeModel::new(0.3, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        let eta_true = ParameterVector::new(Complex64::new(1.0, 0.0), scene.p_ue_true);
        let eta = ParameterVector::new(Complex64::new(0.6, 0.1), scene.p_ue_true);
        let d1 = kl_divergence(&scene, &eta_true, &eta, &wt, &wa, 1.0, 0.5).unwrap();
        let c = 3.0;
        let eta_true_c =
            ParameterVector::new(c * eta_true.alpha(), eta_true.position);
        let eta_c = ParameterVector::new(c * eta.alpha(), eta.position);
        let d2 = kl_divergence(&scene, &eta_true_c, &eta_c, &wt, &wa, 1.0, 0.5).unwrap();
        assert_relative_eq!(d2, c * c * d1, max_relative = 1e-10);
    }

    /// Monte Carlo oracle: draw y under the true law and average the
    /// log-likelihood ratio. For these Gaussians the per-draw ratio is
    /// (||y - mu_assumed||^2 - ||y - mu_true||^2) / N0.
    #[test]
    fn kl_matches_monte_carlo_log_ratio() {
        let (scene, profile) = small_scene(3, 2, 2);
        let model = AmplitudeModel::new(0.3, 0.0, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        let eta_true = ParameterVector::new(Complex64::new(1.0, 0.0), scene.p_ue_true);
        let eta = ParameterVector::new(
            Complex64::new(0.55, 0.05),
            scene.p_ue_true + Vector3::new(0.01, -0.02, 0.015),
        );
        let n0 = 0.8;
        let closed = kl_divergence(&scene, &eta_true, &eta, &wt, &wa, 1.0, n0).unwrap();

        let mu_true = noise_free_mean(&scene, &eta_true, &wt, 1.0).unwrap();
        let mu_assumed = noise_free_mean(&scene, &eta, &wa, 1.0).unwrap();
        let n_draws = 200_000;
        let mut rng = seeds::rng_from(77);
        let (mut acc, mut acc_sq) = (0.0f64, 0.0f64);
        for _ in 0..n_draws {
            let obs = simulate(&scene, &eta_true, &wt, 1.0, n0, &mut rng).unwrap();
            let mut ratio = 0.0;
            for t in 0..3 {
                ratio += ((obs.y[t] - mu_assumed[t]).norm_sqr()
                    - (obs.y[t] - mu_true[t]).norm_sqr())
                    / n0;
            }
            acc += ratio;
            acc_sq += ratio * ratio;
        }
        let mc = acc / n_draws as f64;
        let var = (acc_sq / n_draws as f64 - mc * mc).max(0.0);
        let se = (var / n_draws as f64).sqrt();
        assert!(
            (closed - mc).abs() < 3.0 * se,
            "closed {closed} vs MC {mc} (se {se})"
        );
    }

    #[test]
    fn closest_candidate_ranking_matches_mean_distance() {
        // Lemma-style check: argmin over candidates of the KL equals the
        // argmin of the mean mismatch norm, exactly.
        let (scene, profile) = small_scene(4, 3, 3);
        let model = AmplitudeModel::new(0.4, 0.2, 2.0).unwrap();
        let wt = make_weights(&profile, &model, WeightMode::True);
        let wa = make_weights(&profile, &model, WeightMode::Assumed);
        let eta_true = ParameterVector::new(Complex64::new(1.0, 0.0), scene.p_ue_true);
        let n0 = 0.37;

        let mut rng = seeds::rng_from(5);
        let candidates: Vec<ParameterVector> = (0..24)
            .map(|_| {
                let da = Complex64::new(
                    rng.gen_range(-0.5..0.5f64),
                    rng.gen_range(-0.5..0.5f64),
                );
                let dp = Vector3::new(
                    rng.gen_range(-0.05..0.05f64),
                    rng.gen_range(-0.05..0.05f64),
                    rng.gen_range(-0.05..0.05f64),
                );
                ParameterVector::new(Complex64::new(0.7, 0.0) + da, scene.p_ue_true + dp)
            })
            .collect();
        let by_kl = candidates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let ka = kl_divergence(&scene, &eta_true, a, &wt, &wa, 1.0, n0).unwrap();
                let kb = kl_divergence(&scene, &eta_true, b, &wt, &wa, 1.0, n0).unwrap();
                ka.partial_cmp(&kb).unwrap()
            })
            .map(|(i, _)| i);
        let by_norm = candidates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let na = mean_mismatch_norm(&scene, &eta_true, a, &wt, &wa, 1.0).unwrap();
                let nb = mean_mismatch_norm(&scene, &eta_true, b, &wt, &wa, 1.0).unwrap();
                na.partial_cmp(&nb).unwrap()
            })
            .map(|(i, _)| i);
        assert_eq!(by_kl, by_norm);
    }

    #[test]
    fn observation_csv_round_trip() {
        let obs = ObservationSet {
            y: vec![Complex64::new(1.5, -0.25), Complex64::new(-2.0, 3.0)],
            noise_var: 0.1,
            pilot_energy: 1.0,
        };
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let back = ObservationSet::read_csv(std::io::Cursor::new(buf), 0.1, 1.0).unwrap();
        assert_eq!(obs, back);
    }
}
