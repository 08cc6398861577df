//! Mismatched maximum-likelihood position estimation.
//!
//! The MML estimate maximizes the assumed-model likelihood, which reduces to
//! the same concentrated 3D search as the pseudo-true solve with the
//! observations as the target. The search direction is initialized by a
//! Jacobi-Anger expansion of the steering vector: two cheap 1D grid searches
//! recover azimuth and elevation, then multiple range draws along that
//! direction seed the local optimizer.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::bessel::bessel_j_sequence;
use crate::bounds::solve_concentrated;
use crate::cvec::norm_sq;
use crate::error::{Error, Result};
use crate::geometry::SceneConfig;
use crate::optim::OptimizerSettings;
use crate::ris_model::{make_weights, AmplitudeModel, PhaseProfile, WeightMode};
use crate::seeds;
use crate::signal::{noise_var_for_snr, simulate, ObservationSet, ParameterVector};

/// Grid controls for the Jacobi-Anger angle initializer.
#[derive(Debug, Clone, Copy)]
pub struct JacobiSettings {
    /// Truncation order N of the expansion.
    pub n_terms: usize,
    /// Points of the fine azimuth grid over [-pi, pi).
    pub azimuth_grid: usize,
    /// Points of the fine elevation grid over (0, pi/2].
    pub elevation_grid: usize,
    /// Points of the coarse elevation grid used while profiling azimuth.
    pub coarse_elevation_grid: usize,
}

impl Default for JacobiSettings {
    fn default() -> Self {
        JacobiSettings {
            n_terms: 5,
            azimuth_grid: 721,
            elevation_grid: 721,
            coarse_elevation_grid: 41,
        }
    }
}

/// Direction estimate from the initializer. Elevation is measured from the
/// RIS normal (+z), azimuth in the RIS plane.
#[derive(Debug, Clone, Copy)]
pub struct AngleEstimate {
    pub elevation: f64,
    pub azimuth: f64,
    /// Gain-concentrated correlation achieved at the estimate.
    pub objective: f64,
}

/// Unit direction for (elevation, azimuth).
pub fn direction(elevation: f64, azimuth: f64) -> Vector3<f64> {
    Vector3::new(
        elevation.sin() * azimuth.cos(),
        elevation.sin() * azimuth.sin(),
        elevation.cos(),
    )
}

fn unit_imag_power(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Truncated Jacobi-Anger approximation of the steering vector towards the
/// direction (elevation, azimuth):
/// `[a]_m ~ sum_{n=-N}^{N} j^n J_n(k r_m sin(el)) e^{j n (az - psi_m)}`
/// with the m-th element at polar coordinates (r_m, psi_m) in the RIS plane.
///
/// The approximation drops the wavefront curvature, so the per-entry error
/// shrinks with distance and with growing N; elements at the RIS center use
/// psi_m = 0.
pub fn jacobi_basis(
    scene: &SceneConfig,
    elevation: f64,
    azimuth: f64,
    n_terms: usize,
) -> Result<Vec<Complex64>> {
    if n_terms == 0 {
        return Err(Error::InvalidArgument("expansion needs n_terms >= 1".into()));
    }
    let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
    let sin_el = elevation.sin();
    let mut out = Vec::with_capacity(scene.num_elements());
    for pm in scene.element_positions() {
        let rho = pm - scene.p_ris;
        let r = rho.x.hypot(rho.y);
        let psi = if r > 0.0 { rho.y.atan2(rho.x) } else { 0.0 };
        let js = bessel_j_sequence(n_terms, k * r * sin_el)?;
        // Pair +-n: j^n J_n e^{jnd} + j^{-n} J_{-n} e^{-jnd} = 2 j^n J_n cos(nd).
        let delta = azimuth - psi;
        let mut acc = Complex64::new(js[0], 0.0);
        for (n, &jn) in js.iter().enumerate().skip(1) {
            acc += 2.0 * unit_imag_power(n as i64) * jn * (n as f64 * delta).cos();
        }
        out.push(acc);
    }
    Ok(out)
}

/// Precomputed per-profile tables for the two-step angle search.
///
/// With the expansion, the assumed-model response towards (el, az) factors as
/// `r_t = sum_n e^{j n az} v_{t,n}(el)`, where `v` depends on the profile and
/// elevation only. The initializer caches `v` and the Gram matrices
/// `W = sum_t v_t v_t^H` on its elevation grids, so each observation batch
/// costs two cheap 1D sweeps of the correlation
/// `|sum_t conj(r_t) y_t|^2 / sum_t |r_t|^2`.
pub struct AngleInitializer {
    settings: JacobiSettings,
    coarse_el: Vec<f64>,
    fine_el: Vec<f64>,
    azimuths: Vec<f64>,
    /// Per elevation (coarse then fine): row-major T x (2N+1) response table.
    v: Vec<Vec<Complex64>>,
    /// Per elevation: (2N+1) x (2N+1) Gram matrix of the response table.
    w: Vec<Vec<Complex64>>,
    n_obs: usize,
}

impl AngleInitializer {
    pub fn new(
        scene: &SceneConfig,
        profile: &PhaseProfile,
        pilot_energy: f64,
        settings: &JacobiSettings,
    ) -> Result<Self> {
        if settings.n_terms == 0
            || settings.azimuth_grid < 2
            || settings.elevation_grid < 2
            || settings.coarse_elevation_grid < 2
        {
            return Err(Error::InvalidArgument(
                "initializer grids need n_terms >= 1 and at least 2 points".into(),
            ));
        }
        let n = settings.n_terms;
        let n_harm = 2 * n + 1;
        let n_obs = profile.n_obs();
        let m_count = profile.n_elem();
        if m_count != scene.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} elements, scene has {}",
                m_count,
                scene.num_elements()
            )));
        }
        let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
        let s = pilot_energy.sqrt();
        let assumed = make_weights(profile, &AmplitudeModel::ideal(), WeightMode::Assumed);

        // Group elements by radius so each elevation needs one Bessel
        // sequence per distinct radius instead of per element.
        let mut groups: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
        let mut radius = Vec::with_capacity(m_count);
        let mut psi = Vec::with_capacity(m_count);
        for pm in scene.element_positions() {
            let rho = pm - scene.p_ris;
            let r = rho.x.hypot(rho.y);
            radius.push(r);
            psi.push(if r > 0.0 { rho.y.atan2(rho.x) } else { 0.0 });
        }
        for (m, &r) in radius.iter().enumerate() {
            groups.entry((r / 1e-9).round() as u64).or_default().push(m);
        }

        // Per group: harmonic sums S[g][t][n] = sum_m e^{-j n psi_m} q_{t,m}
        // with q the assumed weight times the BS steering and pilot.
        let group_list: Vec<(f64, Vec<usize>)> = groups
            .into_values()
            .map(|members| (radius[members[0]], members))
            .collect();
        let mut harmonic: Vec<Vec<Complex64>> = Vec::with_capacity(group_list.len());
        for (_, members) in &group_list {
            let mut sg = vec![Complex64::new(0.0, 0.0); n_obs * n_harm];
            for &m in members {
                let e_neg = Complex64::from_polar(1.0, -psi[m]);
                // Powers e^{-j n psi_m} for n = -N..N.
                let mut ph = vec![Complex64::new(0.0, 0.0); n_harm];
                ph[n] = Complex64::new(1.0, 0.0);
                for d in 1..=n {
                    ph[n + d] = ph[n + d - 1] * e_neg;
                    ph[n - d] = ph[n - d + 1] * e_neg.conj();
                }
                let bs_m = scene.bs_steering()[m] * s;
                for t in 0..n_obs {
                    let q = assumed.entry(t, m) * bs_m;
                    let row = &mut sg[t * n_harm..(t + 1) * n_harm];
                    for (h, p) in row.iter_mut().zip(&ph) {
                        *h += q * p;
                    }
                }
            }
            harmonic.push(sg);
        }

        let half_pi = std::f64::consts::FRAC_PI_2;
        let coarse_el: Vec<f64> = (0..settings.coarse_elevation_grid)
            .map(|i| (i + 1) as f64 * half_pi / settings.coarse_elevation_grid as f64)
            .collect();
        let fine_el: Vec<f64> = (0..settings.elevation_grid)
            .map(|i| (i + 1) as f64 * half_pi / settings.elevation_grid as f64)
            .collect();
        let azimuths: Vec<f64> = (0..settings.azimuth_grid)
            .map(|i| {
                -std::f64::consts::PI
                    + i as f64 * 2.0 * std::f64::consts::PI / settings.azimuth_grid as f64
            })
            .collect();

        let all_el: Vec<f64> = coarse_el.iter().chain(fine_el.iter()).copied().collect();
        let tables: Vec<(Vec<Complex64>, Vec<Complex64>)> = all_el
            .par_iter()
            .map(|&el| {
                let sin_el = el.sin();
                let mut v = vec![Complex64::new(0.0, 0.0); n_obs * n_harm];
                for ((r, _), sg) in group_list.iter().zip(&harmonic) {
                    let js = bessel_j_sequence(n, k * r * sin_el)
                        .expect("grid argument within supported range");
                    // Signed coefficients j^n J_n for n = -N..N.
                    let mut coef = vec![Complex64::new(0.0, 0.0); n_harm];
                    for d in 0..=n {
                        let base = unit_imag_power(d as i64) * js[d];
                        coef[n + d] = base;
                        // j^{-d} J_{-d} = j^{-d} (-1)^d J_d = j^d J_d.
                        coef[n - d] = base;
                    }
                    for t in 0..n_obs {
                        let row = &mut v[t * n_harm..(t + 1) * n_harm];
                        let srow = &sg[t * n_harm..(t + 1) * n_harm];
                        for i in 0..n_harm {
                            row[i] += coef[i] * srow[i];
                        }
                    }
                }
                let mut w = vec![Complex64::new(0.0, 0.0); n_harm * n_harm];
                for t in 0..n_obs {
                    let row = &v[t * n_harm..(t + 1) * n_harm];
                    for i in 0..n_harm {
                        for jdx in 0..n_harm {
                            w[i * n_harm + jdx] += row[i].conj() * row[jdx];
                        }
                    }
                }
                (v, w)
            })
            .collect();

        let (v, w) = tables.into_iter().unzip();
        Ok(AngleInitializer {
            settings: *settings,
            coarse_el,
            fine_el,
            azimuths,
            v,
            w,
            n_obs,
        })
    }

    fn correlation(&self, idx: usize, y_proj: &[Complex64], azimuth: f64) -> f64 {
        let n = self.settings.n_terms;
        let n_harm = 2 * n + 1;
        // h_n = e^{j n az}; numerator |h^H y_proj|^2, denominator h^H W h.
        let e = Complex64::from_polar(1.0, azimuth);
        let mut h = vec![Complex64::new(0.0, 0.0); n_harm];
        h[n] = Complex64::new(1.0, 0.0);
        for d in 1..=n {
            h[n + d] = h[n + d - 1] * e;
            h[n - d] = h[n - d + 1] * e.conj();
        }
        let mut num = Complex64::new(0.0, 0.0);
        for i in 0..n_harm {
            num += h[i].conj() * y_proj[i];
        }
        let w = &self.w[idx];
        let mut den = 0.0f64;
        for i in 0..n_harm {
            let mut acc = Complex64::new(0.0, 0.0);
            for jdx in 0..n_harm {
                acc += w[i * n_harm + jdx] * h[jdx];
            }
            den += (h[i].conj() * acc).re;
        }
        if den <= 0.0 {
            0.0
        } else {
            num.norm_sqr() / den
        }
    }

    fn project(&self, idx: usize, y: &[Complex64]) -> Vec<Complex64> {
        let n_harm = 2 * self.settings.n_terms + 1;
        let mut out = vec![Complex64::new(0.0, 0.0); n_harm];
        for (t, yt) in y.iter().enumerate() {
            let row = &self.v[idx][t * n_harm..(t + 1) * n_harm];
            for i in 0..n_harm {
                out[i] += row[i].conj() * yt;
            }
        }
        out
    }

    /// Two-step angle search: azimuth first (elevation profiled over the
    /// coarse grid), then elevation on the fine grid at the azimuth winner.
    pub fn estimate(&self, y: &ObservationSet) -> Result<AngleEstimate> {
        if y.y.len() != self.n_obs {
            return Err(Error::InvalidArgument(format!(
                "observation length {} does not match profile T = {}",
                y.y.len(),
                self.n_obs
            )));
        }
        if norm_sq(&y.y) <= 0.0 {
            return Err(Error::NoInit("observations are identically zero".into()));
        }
        let n_coarse = self.coarse_el.len();
        let proj_coarse: Vec<Vec<Complex64>> =
            (0..n_coarse).map(|i| self.project(i, &y.y)).collect();

        let mut best_az = (f64::NEG_INFINITY, self.azimuths[0]);
        for &az in &self.azimuths {
            let mut profiled = f64::NEG_INFINITY;
            for idx in 0..n_coarse {
                profiled = profiled.max(self.correlation(idx, &proj_coarse[idx], az));
            }
            if profiled > best_az.0 {
                best_az = (profiled, az);
            }
        }

        let mut best = (f64::NEG_INFINITY, self.fine_el[0]);
        for (i, &el) in self.fine_el.iter().enumerate() {
            let idx = n_coarse + i;
            let proj = self.project(idx, &y.y);
            let f = self.correlation(idx, &proj, best_az.1);
            if f > best.0 {
                best = (f, el);
            }
        }
        Ok(AngleEstimate { elevation: best.1, azimuth: best_az.1, objective: best.0 })
    }
}

/// One-shot convenience around [`AngleInitializer`]; callers evaluating many
/// observation batches on one profile should build the initializer once.
pub fn init_angles(
    scene: &SceneConfig,
    y: &ObservationSet,
    profile: &PhaseProfile,
    settings: &JacobiSettings,
) -> Result<AngleEstimate> {
    AngleInitializer::new(scene, profile, y.pilot_energy, settings)?.estimate(y)
}

/// Controls for the MML estimator.
#[derive(Debug, Clone, Copy)]
pub struct MmlSettings {
    pub optimizer: OptimizerSettings,
    pub jacobi: JacobiSettings,
    /// Range draws are uniform on (0, distance_max_m).
    pub distance_max_m: f64,
    /// Seed for the range draws.
    pub seed: u64,
}

impl Default for MmlSettings {
    fn default() -> Self {
        MmlSettings {
            optimizer: OptimizerSettings::default(),
            jacobi: JacobiSettings::default(),
            distance_max_m: 1000.0,
            seed: 0,
        }
    }
}

/// Per-start record of the MML search.
#[derive(Debug, Clone, Copy)]
pub struct StartLog {
    pub index: usize,
    pub distance_m: f64,
    pub objective: f64,
    pub converged: bool,
}

/// MML estimate with the achieved residual and the per-start log.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub eta_hat: ParameterVector,
    /// Final fit residual ||y - mu_assumed(eta_hat)||.
    pub residual: f64,
    pub angles: AngleEstimate,
    pub starts_log: Vec<StartLog>,
}

/// Mismatched ML estimate of the channel gain and UE position: the
/// concentrated search over position with the closed-form gain, started from
/// `n_starts` range draws along the initializer's direction.
pub fn mml_estimate(
    scene: &SceneConfig,
    y: &ObservationSet,
    profile: &PhaseProfile,
    settings: &MmlSettings,
) -> Result<EstimationResult> {
    let init = AngleInitializer::new(scene, profile, y.pilot_energy, &settings.jacobi)?;
    mml_estimate_with_init(scene, y, profile, &init, settings)
}

/// [`mml_estimate`] with a shared, prebuilt angle initializer.
pub fn mml_estimate_with_init(
    scene: &SceneConfig,
    y: &ObservationSet,
    profile: &PhaseProfile,
    init: &AngleInitializer,
    settings: &MmlSettings,
) -> Result<EstimationResult> {
    let angles = init.estimate(y)?;
    let dir = direction(angles.elevation, angles.azimuth);
    let mut rng = seeds::rng_from(settings.seed);
    let n_starts = settings.optimizer.n_starts.max(1);
    let distances: Vec<f64> = (0..n_starts)
        .map(|_| rng.gen_range(0.0..settings.distance_max_m))
        .collect();
    let starts: Vec<Vector3<f64>> = distances.iter().map(|&d| d * dir).collect();

    let assumed = make_weights(profile, &AmplitudeModel::ideal(), WeightMode::Assumed);
    let solve = solve_concentrated(
        scene,
        &starts,
        &y.y,
        &assumed,
        y.pilot_energy,
        &settings.optimizer,
    )?;

    // objective = -||P_c y||^2, so the residual is sqrt(||y||^2 + objective).
    let residual = (norm_sq(&y.y) + solve.objective).max(0.0).sqrt();
    let starts_log = solve
        .search
        .log
        .iter()
        .map(|r| StartLog {
            index: r.index,
            distance_m: distances[r.index],
            objective: r.result.f,
            converged: r.result.converged,
        })
        .collect();
    Ok(EstimationResult { eta_hat: solve.eta0, residual, angles, starts_log })
}

/// Monte Carlo RMSE of the MML position estimate.
#[derive(Debug, Clone, Copy)]
pub struct RmseResult {
    /// sqrt of the mean squared position error, meters.
    pub rmse: f64,
    /// Delta-method standard error of the RMSE.
    pub stderr: f64,
    pub n_trials: usize,
    /// Trials whose starts all diverged even after one redraw.
    pub n_failures: usize,
}

/// Run `n_trials` independent estimates at the given SNR and reduce to the
/// position RMSE. Trials draw disjoint seeded noise and start streams from
/// `seed`, so the result is independent of scheduling; failed trials are
/// redrawn once and then excluded (and counted).
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_rmse(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    snr_db: f64,
    pilot_energy: f64,
    n_trials: usize,
    seed: u64,
    settings: &MmlSettings,
) -> Result<RmseResult> {
    let init = AngleInitializer::new(scene, profile, pilot_energy, &settings.jacobi)?;
    monte_carlo_rmse_with_init(
        scene, eta_true, profile, model, snr_db, pilot_energy, n_trials, seed, settings, &init,
    )
}

/// [`monte_carlo_rmse`] with a shared, prebuilt angle initializer, so sweeps
/// reuse one table across SNR points and amplitude models.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_rmse_with_init(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    snr_db: f64,
    pilot_energy: f64,
    n_trials: usize,
    seed: u64,
    settings: &MmlSettings,
    init: &AngleInitializer,
) -> Result<RmseResult> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let true_weights = make_weights(profile, model, WeightMode::True);
    let noise_var = noise_var_for_snr(scene, eta_true, &true_weights, snr_db, pilot_energy)?;

    let errors: Vec<Option<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut noise_rng =
                seeds::rng_from(seeds::path_seed(seed, &[seeds::TAG_NOISE, trial as u64]));
            let y = simulate(
                scene,
                eta_true,
                &true_weights,
                pilot_energy,
                noise_var,
                &mut noise_rng,
            )
            .expect("noise variance checked above");
            for redraw in 0..2u64 {
                let mut trial_settings = *settings;
                trial_settings.seed =
                    seeds::path_seed(seed, &[seeds::TAG_MML_STARTS, trial as u64, redraw]);
                match mml_estimate_with_init(scene, &y, profile, init, &trial_settings) {
                    Ok(est) => {
                        return Some((est.eta_hat.position - eta_true.position).norm());
                    }
                    Err(_) => continue,
                }
            }
            None
        })
        .collect();

    let ok: Vec<f64> = errors.iter().flatten().copied().collect();
    let n_failures = n_trials - ok.len();
    if ok.is_empty() {
        return Err(Error::NoSolution("every trial failed".into()));
    }
    let n = ok.len() as f64;
    let mean_sq = ok.iter().map(|e| e * e).sum::<f64>() / n;
    let rmse = mean_sq.sqrt();
    let var_sq = ok.iter().map(|e| (e * e - mean_sq).powi(2)).sum::<f64>() / n;
    let stderr = if rmse > 0.0 { (var_sq / n).sqrt() / (2.0 * rmse) } else { 0.0 };
    Ok(RmseResult { rmse, stderr, n_trials: ok.len(), n_failures })
}
