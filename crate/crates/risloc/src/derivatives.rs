//! Analytic first and second derivatives of the mean vector with respect to
//! eta = [alpha_re, alpha_im, x, y, z], plus a finite-difference harness.
//!
//! The mean is affine in the complex gain, so the gain-gain block of the
//! Hessian vanishes and the gain columns need no position-dependent factors.
//! Position derivatives follow from the gradient of the per-element path
//! difference, `grad ||p - p_m|| - grad ||p - p_ris|| = u_m - u` with unit
//! vectors u_m and u away from the element and the RIS center.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::SceneConfig;
use crate::ris_model::Weights;
use crate::signal::{noise_free_mean, ParameterVector};

/// Positions closer than this to an element or the RIS center make the unit
/// vectors (and hence the derivatives) undefined.
const MIN_SEPARATION_M: f64 = 1e-9;

/// T x 5 matrix of first derivatives of the mean vector.
#[derive(Debug, Clone)]
pub struct Jacobian {
    d_mu: Vec<Complex64>,
    n_obs: usize,
}

impl Jacobian {
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn entry(&self, t: usize, i: usize) -> Complex64 {
        self.d_mu[t * 5 + i]
    }

    /// sum_t conj(J[t][i]) * J[t][j].
    pub fn col_dot(&self, i: usize, j: usize) -> Complex64 {
        (0..self.n_obs)
            .map(|t| self.entry(t, i).conj() * self.entry(t, j))
            .sum()
    }

    /// sum_t conj(v[t]) * J[t][i].
    pub fn vec_col_dot(&self, v: &[Complex64], i: usize) -> Complex64 {
        v.iter()
            .enumerate()
            .map(|(t, vt)| vt.conj() * self.entry(t, i))
            .sum()
    }

    /// Infinity norm of column i.
    pub fn col_max(&self, i: usize) -> f64 {
        (0..self.n_obs).map(|t| self.entry(t, i).norm()).fold(0.0, f64::max)
    }
}

/// T x 5 x 5 tensor of second derivatives, symmetric in the last two indices.
#[derive(Debug, Clone)]
pub struct Hessian {
    d2_mu: Vec<Complex64>,
    n_obs: usize,
}

impl Hessian {
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn entry(&self, t: usize, i: usize, j: usize) -> Complex64 {
        self.d2_mu[t * 25 + i * 5 + j]
    }

    /// sum_t conj(v[t]) * H[t][i][j].
    pub fn vec_dot(&self, v: &[Complex64], i: usize, j: usize) -> Complex64 {
        v.iter()
            .enumerate()
            .map(|(t, vt)| vt.conj() * self.entry(t, i, j))
            .sum()
    }

    fn set(&mut self, t: usize, i: usize, j: usize, v: Complex64) {
        self.d2_mu[t * 25 + i * 5 + j] = v;
    }
}

struct ElementGeometry {
    /// b_m(p) scaled by the pilot amplitude.
    bs: Vec<Complex64>,
    /// u_m - u per element.
    grad: Vec<[f64; 3]>,
    /// Curvature factors per element, pairs (xx, yy, zz, xy, xz, yz).
    curv: Vec<[f64; 6]>,
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn element_geometry(
    scene: &SceneConfig,
    p: Vector3<f64>,
    pilot_energy: f64,
) -> Result<ElementGeometry> {
    let r0 = (p - scene.p_ris).norm();
    if r0 < MIN_SEPARATION_M {
        return Err(Error::SingularGeometry(
            "position coincides with the RIS center".to_string(),
        ));
    }
    let u0 = (p - scene.p_ris) / r0;
    let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
    let s = pilot_energy.sqrt();

    let m_count = scene.num_elements();
    let mut bs = Vec::with_capacity(m_count);
    let mut grad = Vec::with_capacity(m_count);
    let mut curv = Vec::with_capacity(m_count);
    for (m, pm) in scene.element_positions().iter().enumerate() {
        let dm = p - pm;
        let rm = dm.norm();
        if rm < MIN_SEPARATION_M {
            return Err(Error::SingularGeometry(format!(
                "position coincides with element {m}"
            )));
        }
        let um = dm / rm;
        let b = Complex64::from_polar(1.0, -k * (rm - r0)) * scene.bs_steering()[m];
        bs.push(b * s);
        grad.push([um.x - u0.x, um.y - u0.y, um.z - u0.z]);
        let mut c = [0.0f64; 6];
        for (idx, (n1, n2)) in PAIRS.iter().enumerate() {
            let delta = if n1 == n2 { 1.0 } else { 0.0 };
            c[idx] = (delta - um[*n1] * um[*n2]) / rm - (delta - u0[*n1] * u0[*n2]) / r0;
        }
        curv.push(c);
    }
    Ok(ElementGeometry { bs, grad, curv })
}

/// First derivatives of the mean vector at `eta` for the given weights.
///
/// The same formulas serve the assumed and the true model; only the weight
/// matrix changes.
pub fn jacobian_mu(
    scene: &SceneConfig,
    eta: &ParameterVector,
    weights: &Weights,
    pilot_energy: f64,
) -> Result<Jacobian> {
    let geo = element_geometry(scene, eta.position, pilot_energy)?;
    let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
    let alpha = eta.alpha();
    let minus_jk = Complex64::new(0.0, -k);

    let n_obs = weights.n_obs();
    let mut d_mu = vec![Complex64::new(0.0, 0.0); n_obs * 5];
    for t in 0..n_obs {
        let row = weights.row(t);
        let mut c = Complex64::new(0.0, 0.0);
        let mut d = [Complex64::new(0.0, 0.0); 3];
        for m in 0..row.len() {
            let bw = geo.bs[m] * row[m];
            c += bw;
            for nu in 0..3 {
                d[nu] += bw * geo.grad[m][nu];
            }
        }
        d_mu[t * 5] = c;
        d_mu[t * 5 + 1] = Complex64::new(0.0, 1.0) * c;
        for nu in 0..3 {
            d_mu[t * 5 + 2 + nu] = minus_jk * alpha * d[nu];
        }
    }
    Ok(Jacobian { d_mu, n_obs })
}

/// Second derivatives of the mean vector at `eta` for the given weights.
/// The gain-gain block is identically zero.
pub fn hessian_mu(
    scene: &SceneConfig,
    eta: &ParameterVector,
    weights: &Weights,
    pilot_energy: f64,
) -> Result<Hessian> {
    let geo = element_geometry(scene, eta.position, pilot_energy)?;
    let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
    let alpha = eta.alpha();
    let minus_jk = Complex64::new(0.0, -k);
    let j = Complex64::new(0.0, 1.0);

    let n_obs = weights.n_obs();
    let mut h = Hessian { d2_mu: vec![Complex64::new(0.0, 0.0); n_obs * 25], n_obs };
    for t in 0..n_obs {
        let row = weights.row(t);
        let mut d = [Complex64::new(0.0, 0.0); 3];
        let mut e = [Complex64::new(0.0, 0.0); 6];
        let mut f = [Complex64::new(0.0, 0.0); 6];
        for m in 0..row.len() {
            let bw = geo.bs[m] * row[m];
            let g = &geo.grad[m];
            for nu in 0..3 {
                d[nu] += bw * g[nu];
            }
            for (idx, (n1, n2)) in PAIRS.iter().enumerate() {
                e[idx] += bw * (g[*n1] * g[*n2]);
                f[idx] += bw * geo.curv[m][idx];
            }
        }
        for nu in 0..3 {
            let mixed = minus_jk * d[nu];
            h.set(t, 0, 2 + nu, mixed);
            h.set(t, 2 + nu, 0, mixed);
            h.set(t, 1, 2 + nu, j * mixed);
            h.set(t, 2 + nu, 1, j * mixed);
        }
        for (idx, (n1, n2)) in PAIRS.iter().enumerate() {
            let v = -alpha * k * k * e[idx] + minus_jk * alpha * f[idx];
            h.set(t, 2 + n1, 2 + n2, v);
            h.set(t, 2 + n2, 2 + n1, v);
        }
    }
    Ok(h)
}

/// Per-component agreement between the analytic derivatives and central
/// finite differences of the mean vector.
#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    /// Max relative error per parameter, first derivatives.
    pub jacobian_rel: [f64; 5],
    /// Max relative error per parameter pair, second derivatives.
    pub hessian_rel: [[f64; 5]; 5],
    /// Max absolute asymmetry of the analytic Hessian over (i, j) pairs.
    pub hessian_symmetry: f64,
    pub step: f64,
}

impl FiniteDiffReport {
    pub fn max_jacobian_rel(&self) -> f64 {
        self.jacobian_rel.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_hessian_rel(&self) -> f64 {
        self.hessian_rel
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn perturbed(eta: &ParameterVector, i: usize, delta: f64) -> ParameterVector {
    let mut out = *eta;
    match i {
        0 => out.alpha_re += delta,
        1 => out.alpha_im += delta,
        2 => out.position.x += delta,
        3 => out.position.y += delta,
        _ => out.position.z += delta,
    }
    out
}

/// Compare [`jacobian_mu`] and [`hessian_mu`] against central finite
/// differences. First derivatives use the given step; second differences
/// widen it 100x (capped at 1e-3) because their roundoff floor scales as
/// eps/h^2 and would swamp the comparison at first-derivative steps.
pub fn finite_diff_check(
    scene: &SceneConfig,
    eta: &ParameterVector,
    weights: &Weights,
    pilot_energy: f64,
    step: f64,
) -> Result<FiniteDiffReport> {
    if !(1e-8..=1e-3).contains(&step) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in [1e-8, 1e-3], got {step}"
        )));
    }
    let step2 = (step * 100.0).min(1e-3);
    let jac = jacobian_mu(scene, eta, weights, pilot_energy)?;
    let hess = hessian_mu(scene, eta, weights, pilot_energy)?;
    let n_obs = weights.n_obs();

    let mu_at = |e: &ParameterVector| noise_free_mean(scene, e, weights, pilot_energy);
    let mu0 = mu_at(eta)?;

    // Global Hessian scale; zero analytic columns are judged against it.
    let mut h_global = 0.0f64;
    for t in 0..n_obs {
        for i in 0..5 {
            for j in 0..5 {
                h_global = h_global.max(hess.entry(t, i, j).norm());
            }
        }
    }

    let mut jacobian_rel = [0.0f64; 5];
    for i in 0..5 {
        let plus = mu_at(&perturbed(eta, i, step))?;
        let minus = mu_at(&perturbed(eta, i, -step))?;
        let col_scale = jac.col_max(i);
        let mut worst = 0.0f64;
        for t in 0..n_obs {
            let fd = (plus[t] - minus[t]) / (2.0 * step);
            let err = (fd - jac.entry(t, i)).norm();
            worst = worst.max(err);
        }
        jacobian_rel[i] = if col_scale > 0.0 { worst / col_scale } else { worst };
    }

    let mut hessian_rel = [[0.0f64; 5]; 5];
    for i in 0..5 {
        for j in i..5 {
            let fd_col: Vec<Complex64> = if i == j {
                let plus = mu_at(&perturbed(eta, i, step2))?;
                let minus = mu_at(&perturbed(eta, i, -step2))?;
                (0..n_obs)
                    .map(|t| (plus[t] - 2.0 * mu0[t] + minus[t]) / (step2 * step2))
                    .collect()
            } else {
                let pp = mu_at(&perturbed(&perturbed(eta, i, step2), j, step2))?;
                let pm = mu_at(&perturbed(&perturbed(eta, i, step2), j, -step2))?;
                let mp = mu_at(&perturbed(&perturbed(eta, i, -step2), j, step2))?;
                let mm = mu_at(&perturbed(&perturbed(eta, i, -step2), j, -step2))?;
                (0..n_obs)
                    .map(|t| (pp[t] - pm[t] - mp[t] + mm[t]) / (4.0 * step2 * step2))
                    .collect()
            };
            let col_scale = (0..n_obs)
                .map(|t| hess.entry(t, i, j).norm())
                .fold(0.0, f64::max);
            let denom = if col_scale > 1e-12 * h_global { col_scale } else { h_global.max(1e-300) };
            let mut worst = 0.0f64;
            for t in 0..n_obs {
                worst = worst.max((fd_col[t] - hess.entry(t, i, j)).norm());
            }
            hessian_rel[i][j] = worst / denom;
            hessian_rel[j][i] = hessian_rel[i][j];
        }
    }

    let mut hessian_symmetry = 0.0f64;
    for t in 0..n_obs {
        for i in 0..5 {
            for j in 0..5 {
                hessian_symmetry =
                    hessian_symmetry.max((hess.entry(t, i, j) - hess.entry(t, j, i)).norm());
            }
        }
    }

    Ok(FiniteDiffReport { jacobian_rel, hessian_rel, hessian_symmetry, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris_model::{make_weights, AmplitudeModel, PhaseProfile, WeightMode};
    use nalgebra::Vector3;
    use num_complex::Complex64;

    fn toy(seed: u64) -> (SceneConfig, Weights, ParameterVector) {
        let scene = SceneConfig::from_wavelength(
            0.1,
            2,
            2,
            None,
            Vector3::zeros(),
            Vector3::new(-1.2, 1.1, 1.4),
            Vector3::new(0.9, 0.8, 1.1),
        )
        .unwrap();
        let profile = PhaseProfile::random(2, 4, seed).unwrap();
        let model = AmplitudeModel::new(0.3, 0.0, 2.0).unwrap();
        let w = make_weights(&profile, &model, WeightMode::Assumed);
        let eta = ParameterVector::new(Complex64::new(0.8, -0.4), scene.p_ue_true);
        (scene, w, eta)
    }

    #[test]
    fn gain_columns_are_quadrature_pair() {
        let (scene, w, eta) = toy(3);
        let jac = jacobian_mu(&scene, &eta, &w, 1.0).unwrap();
        for t in 0..2 {
            let expect = Complex64::new(0.0, 1.0) * jac.entry(t, 0);
            assert!((jac.entry(t, 1) - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_gain_kills_position_columns() {
        let (scene, w, mut eta) = toy(4);
        eta.alpha_re = 0.0;
        eta.alpha_im = 0.0;
        let jac = jacobian_mu(&scene, &eta, &w, 1.0).unwrap();
        for t in 0..2 {
            for i in 2..5 {
                assert_eq!(jac.entry(t, i), Complex64::new(0.0, 0.0));
            }
            // Gain columns survive: the mean is alpha times a fixed vector.
            assert!(jac.entry(t, 0).norm() > 0.0);
        }
    }

    #[test]
    fn hessian_gain_blocks() {
        let (scene, w, eta) = toy(5);
        let h = hessian_mu(&scene, &eta, &w, 1.0).unwrap();
        for t in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(h.entry(t, i, j), Complex64::new(0.0, 0.0));
                }
            }
            for nu in 0..3 {
                let expect = Complex64::new(0.0, 1.0) * h.entry(t, 0, 2 + nu);
                assert!((h.entry(t, 1, 2 + nu) - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn finite_differences_confirm_analytic_derivatives() {
        for seed in [1, 2, 9] {
            let (scene, w, eta) = toy(seed);
            let report = finite_diff_check(&scene, &eta, &w, 1.0, 1e-6).unwrap();
            assert!(
                report.max_jacobian_rel() < 1e-5,
                "seed {seed}: jacobian rel {:?}",
                report.jacobian_rel
            );
            assert!(
                report.max_hessian_rel() < 1e-4,
                "seed {seed}: hessian rel {}",
                report.max_hessian_rel()
            );
            assert!(report.hessian_symmetry < 1e-10);
            // Exactly-linear gain columns agree to near machine precision.
            assert!(report.jacobian_rel[0] < 1e-9);
            assert!(report.jacobian_rel[1] < 1e-9);
        }
    }

    #[test]
    fn step_outside_supported_interval_is_rejected() {
        let (scene, w, eta) = toy(6);
        assert!(finite_diff_check(&scene, &eta, &w, 1.0, 1e-9).is_err());
        assert!(finite_diff_check(&scene, &eta, &w, 1.0, 1e-2).is_err());
    }

    #[test]
    fn position_at_ris_center_is_singular() {
        let (scene, w, mut eta) = toy(7);
        eta.position = scene.p_ris;
        match jacobian_mu(&scene, &eta, &w, 1.0) {
            Err(Error::SingularGeometry(_)) => {}
            other => panic!("expected singular geometry, got {other:?}"),
        }
    }
}
