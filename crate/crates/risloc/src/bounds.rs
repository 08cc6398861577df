//! Pseudo-true parameter, misspecified Cramér-Rao bound, lower bound with
//! bias decomposition, and the classical CRB baseline.
//!
//! The pseudo-true parameter minimizes the distance between the true-model
//! mean and the assumed-model mean. The complex gain has a closed-form least
//! squares solution for any position, so the search concentrates to three
//! dimensions: maximize the power of the true mean projected onto the
//! assumed response. Around the pseudo-true point, the curvature matrix A and
//! the score-covariance matrix B combine to the MCRB `A^-1 B A^-1`, and the
//! lower bound about the true parameter adds the SNR-independent bias outer
//! product.

use nalgebra::{SMatrix, SVector, Vector3};
use num_complex::Complex64;
use rand::Rng;

use crate::cvec::{cdot, norm_sq};
use crate::derivatives::{hessian_mu, jacobian_mu};
use crate::error::{Error, Result};
use crate::geometry::SceneConfig;
use crate::optim::{multi_start, MultiStartResult, OptimizerSettings};
use crate::ris_model::{make_weights, AmplitudeModel, PhaseProfile, WeightMode, Weights};
use crate::seeds;
use crate::signal::{noise_free_mean, ParameterVector};

pub type Matrix5 = SMatrix<f64, 5, 5>;

/// Condition numbers beyond this are treated as singular.
const MAX_CONDITION: f64 = 1e12;

/// Assumed-model response c(p): entry t is `sum_m b_m(p) w_assumed[t][m] s`.
/// The assumed-model mean at (alpha, p) is alpha * c(p).
pub fn assumed_response(
    scene: &SceneConfig,
    p: Vector3<f64>,
    assumed_weights: &Weights,
    pilot_energy: f64,
) -> Result<Vec<Complex64>> {
    let unit = ParameterVector::new(Complex64::new(1.0, 0.0), p);
    noise_free_mean(scene, &unit, assumed_weights, pilot_energy)
}

/// Least-squares complex gain fitting `mu_true` with the assumed response at
/// position p: `alpha = c(p)^H mu / (c(p)^H c(p))`.
pub fn optimal_alpha(
    scene: &SceneConfig,
    p: Vector3<f64>,
    mu_true: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
) -> Result<Complex64> {
    let c = assumed_response(scene, p, assumed_weights, pilot_energy)?;
    let cc = norm_sq(&c);
    if cc <= 0.0 {
        return Err(Error::DegenerateChannel(
            "assumed response is identically zero".to_string(),
        ));
    }
    Ok(cdot(&c, mu_true) / cc)
}

/// Negated projection power `-|c(p)^H mu|^2 / (c(p)^H c(p))`, so that
/// minimizing it maximizes the fit of the assumed model. Values lie in
/// `[-||mu||^2, 0]`.
pub fn concentrated_objective(
    scene: &SceneConfig,
    p: Vector3<f64>,
    mu_true: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
) -> Result<f64> {
    let c = assumed_response(scene, p, assumed_weights, pilot_energy)?;
    let cc = norm_sq(&c);
    if cc <= 0.0 {
        return Err(Error::DegenerateChannel(
            "assumed response is identically zero".to_string(),
        ));
    }
    Ok(-cdot(&c, mu_true).norm_sqr() / cc)
}

/// Pseudo-true solve output.
#[derive(Debug, Clone)]
pub struct PseudoTrue {
    pub eta0: ParameterVector,
    /// Final value of the concentrated objective at the solution.
    pub objective: f64,
    /// Worst relative stationarity residual max_i |Re eps^H J_i| /
    /// (||eps|| ||J_i||) over the five parameters.
    pub stationarity: f64,
    /// Residual norm ||mu_true - mu_assumed(eta0)||.
    pub residual_norm: f64,
    /// Multi-start log of the concentrated search.
    pub search: MultiStartResult,
}

/// Generate the concentrated-search starts: the anchor itself plus
/// `n_starts - 1` copies with every coordinate scaled by an independent
/// uniform(0,1) draw.
pub fn scaled_starts(anchor: Vector3<f64>, n_starts: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = seeds::rng_from(seed);
    let mut starts = Vec::with_capacity(n_starts.max(1));
    starts.push(anchor);
    for _ in 1..n_starts {
        let u: [f64; 3] = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        starts.push(Vector3::new(anchor.x * u[0], anchor.y * u[1], anchor.z * u[2]));
    }
    starts
}

/// Find the pseudo-true parameter for a mismatch scenario: the parameter of
/// the assumed model whose mean is closest to the true-model mean.
///
/// The 3D concentrated search is seeded at the true position plus scaled
/// starts, then the best point is polished by Gauss-Newton steps with the
/// analytic Jacobian until the full 5D problem is stationary.
pub fn pseudo_true(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    settings: &OptimizerSettings,
) -> Result<PseudoTrue> {
    let true_weights = make_weights(profile, model, WeightMode::True);
    let assumed_weights = make_weights(profile, model, WeightMode::Assumed);
    let mu_true = noise_free_mean(scene, eta_true, &true_weights, pilot_energy)?;
    pseudo_true_for_target(scene, eta_true.position, &mu_true, &assumed_weights, pilot_energy, settings)
}

/// Concentrated least-squares fit of the assumed model to an arbitrary
/// target vector, seeded by scaled starts around `anchor`. This one routine
/// serves both the pseudo-true solve (target = true mean) and the MML
/// estimator (target = observations, anchor from the angle initializer).
pub fn pseudo_true_for_target(
    scene: &SceneConfig,
    anchor: Vector3<f64>,
    target: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
    settings: &OptimizerSettings,
) -> Result<PseudoTrue> {
    let starts = scaled_starts(anchor, settings.n_starts, settings.start_seed);
    solve_concentrated(scene, &starts, target, assumed_weights, pilot_energy, settings)
}

/// Run the concentrated search from explicit starts and polish the winner.
pub fn solve_concentrated(
    scene: &SceneConfig,
    starts: &[Vector3<f64>],
    target: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
    settings: &OptimizerSettings,
) -> Result<PseudoTrue> {
    let objective = |p: &Vector3<f64>| {
        concentrated_objective(scene, *p, target, assumed_weights, pilot_energy)
            .unwrap_or(f64::INFINITY)
    };
    let search = multi_start(objective, starts, settings)?;

    let mut p0 = search.best.x;
    let mut alpha0 = optimal_alpha(scene, p0, target, assumed_weights, pilot_energy)?;
    (p0, alpha0) = gauss_newton_polish(
        scene,
        p0,
        alpha0,
        target,
        assumed_weights,
        pilot_energy,
        40,
    )?;

    let eta0 = ParameterVector::new(alpha0, p0);
    let mu0 = noise_free_mean(scene, &eta0, assumed_weights, pilot_energy)?;
    let eps: Vec<Complex64> = target.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let jac = jacobian_mu(scene, &eta0, assumed_weights, pilot_energy)?;
    let eps_norm = norm_sq(&eps).sqrt();
    let mut stationarity = 0.0f64;
    for i in 0..5 {
        let ji_norm = jac.col_dot(i, i).re.sqrt();
        if eps_norm > 0.0 && ji_norm > 0.0 {
            let r = jac.vec_col_dot(&eps, i).re.abs() / (eps_norm * ji_norm);
            stationarity = stationarity.max(r);
        }
    }
    let objective = concentrated_objective(scene, p0, target, assumed_weights, pilot_energy)?;
    Ok(PseudoTrue {
        eta0,
        objective,
        stationarity,
        residual_norm: eps_norm,
        search,
    })
}

/// Damped Gauss-Newton refinement of the least-squares fit
/// `min ||target - mu_assumed(alpha, p)||` using the analytic Jacobian.
/// The gain is re-solved in closed form after every accepted step.
fn gauss_newton_polish(
    scene: &SceneConfig,
    mut p: Vector3<f64>,
    mut alpha: Complex64,
    target: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
    max_iters: usize,
) -> Result<(Vector3<f64>, Complex64)> {
    let residual_sq = |p: Vector3<f64>, alpha: Complex64| -> Result<f64> {
        let eta = ParameterVector::new(alpha, p);
        let mu = noise_free_mean(scene, &eta, assumed_weights, pilot_energy)?;
        Ok(target.iter().zip(&mu).map(|(a, b)| (a - b).norm_sqr()).sum())
    };
    let mut f_cur = residual_sq(p, alpha)?;
    for _ in 0..max_iters {
        let eta = ParameterVector::new(alpha, p);
        let mu = noise_free_mean(scene, &eta, assumed_weights, pilot_energy)?;
        let eps: Vec<Complex64> = target.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let jac = jacobian_mu(scene, &eta, assumed_weights, pilot_energy)?;

        let mut gram = Matrix5::zeros();
        let mut rhs = SVector::<f64, 5>::zeros();
        for i in 0..5 {
            rhs[i] = jac.vec_col_dot(&eps, i).re;
            for j in 0..5 {
                gram[(i, j)] = jac.col_dot(i, j).re;
            }
        }
        let delta = match gram.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match gram.lu().solve(&rhs) {
                Some(d) => d,
                None => break,
            },
        };
        if !delta.iter().all(|d| d.is_finite()) {
            break;
        }

        // Backtracking on the Gauss-Newton step.
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..12 {
            let p_new = p + scale * Vector3::new(delta[2], delta[3], delta[4]);
            let alpha_new = match optimal_alpha(scene, p_new, target, assumed_weights, pilot_energy)
            {
                Ok(a) => a,
                Err(_) => {
                    scale *= 0.5;
                    continue;
                }
            };
            let f_new = match residual_sq(p_new, alpha_new) {
                Ok(f) => f,
                Err(_) => {
                    scale *= 0.5;
                    continue;
                }
            };
            if f_new <= f_cur {
                let step = (p_new - p).norm();
                let rel_drop = (f_cur - f_new) / f_cur.max(f64::MIN_POSITIVE);
                p = p_new;
                alpha = alpha_new;
                f_cur = f_new;
                accepted = true;
                if step < 1e-12 && rel_drop < 1e-15 {
                    return Ok((p, alpha));
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((p, alpha))
}

/// Curvature matrix: `[A]_ij = (2/N0) Re{ eps^H d2mu_ij - dmu_i^H dmu_j }`
/// evaluated at the pseudo-true parameter with assumed-model derivatives,
/// where `eps = mu_true(eta_true) - mu_assumed(eta0)`.
pub fn matrix_a(
    scene: &SceneConfig,
    eta0: &ParameterVector,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<Matrix5> {
    let true_weights = make_weights(profile, model, WeightMode::True);
    let assumed_weights = make_weights(profile, model, WeightMode::Assumed);
    let mu_true = noise_free_mean(scene, eta_true, &true_weights, pilot_energy)?;
    matrix_a_from(scene, eta0, &mu_true, &assumed_weights, pilot_energy, noise_var)
}

pub(crate) fn matrix_a_from(
    scene: &SceneConfig,
    eta0: &ParameterVector,
    mu_true: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<Matrix5> {
    check_noise_var(noise_var)?;
    let mu0 = noise_free_mean(scene, eta0, assumed_weights, pilot_energy)?;
    let eps: Vec<Complex64> = mu_true.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let jac = jacobian_mu(scene, eta0, assumed_weights, pilot_energy)?;
    let hess = hessian_mu(scene, eta0, assumed_weights, pilot_energy)?;
    let scale = 2.0 / noise_var;
    let mut a = Matrix5::zeros();
    for i in 0..5 {
        for j in i..5 {
            let v = scale * (hess.vec_dot(&eps, i, j).re - jac.col_dot(i, j).re);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// Score covariance: `[B]_ij = (2/N0) [ (2/N0) Re{eps^H dmu_i} Re{eps^H dmu_j}
/// + Re{dmu_i^H dmu_j} ]` at the pseudo-true parameter.
pub fn matrix_b(
    scene: &SceneConfig,
    eta0: &ParameterVector,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<Matrix5> {
    let true_weights = make_weights(profile, model, WeightMode::True);
    let assumed_weights = make_weights(profile, model, WeightMode::Assumed);
    let mu_true = noise_free_mean(scene, eta_true, &true_weights, pilot_energy)?;
    matrix_b_from(scene, eta0, &mu_true, &assumed_weights, pilot_energy, noise_var)
}

pub(crate) fn matrix_b_from(
    scene: &SceneConfig,
    eta0: &ParameterVector,
    mu_true: &[Complex64],
    assumed_weights: &Weights,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<Matrix5> {
    check_noise_var(noise_var)?;
    let mu0 = noise_free_mean(scene, eta0, assumed_weights, pilot_energy)?;
    let eps: Vec<Complex64> = mu_true.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let jac = jacobian_mu(scene, eta0, assumed_weights, pilot_energy)?;
    let scale = 2.0 / noise_var;
    let mut eps_j = [0.0f64; 5];
    for (i, e) in eps_j.iter_mut().enumerate() {
        *e = jac.vec_col_dot(&eps, i).re;
    }
    let mut b = Matrix5::zeros();
    for i in 0..5 {
        for j in i..5 {
            let v = scale * (scale * eps_j[i] * eps_j[j] + jac.col_dot(i, j).re);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

fn check_noise_var(noise_var: f64) -> Result<()> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    Ok(())
}

/// Assembled bound matrices and scalar position metrics (all in meters).
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub eta0: ParameterVector,
    pub a: Matrix5,
    pub b: Matrix5,
    pub mcrb: Matrix5,
    pub lb: Matrix5,
    pub bias_matrix: Matrix5,
    /// sqrt of the trace of the position block of the MCRB.
    pub peb_mcrb: f64,
    /// sqrt of the trace of the position block of the LB.
    pub peb_lb: f64,
    /// Euclidean position bias ||p_true - p0||.
    pub bias_norm: f64,
    /// Condition number of A.
    pub cond_a: f64,
}

/// MCRB = A^-1 B A^-1 (computed by two linear solves, not explicit
/// inverses), LB = MCRB + (eta_true - eta0)(eta_true - eta0)^T.
pub fn assemble_bounds(
    a: &Matrix5,
    b: &Matrix5,
    eta0: &ParameterVector,
    eta_true: &ParameterVector,
) -> Result<BoundsReport> {
    let cond_a = condition_number(a);
    if !cond_a.is_finite() || cond_a > MAX_CONDITION {
        return Err(Error::IllConditioned {
            condition: cond_a,
            context: "curvature matrix A in MCRB assembly".to_string(),
        });
    }
    let lu = a.lu();
    let a_inv_b = lu
        .solve(b)
        .ok_or_else(|| Error::IllConditioned { condition: cond_a, context: "A solve".into() })?;
    // A and B are symmetric, so (A^-1 B)^T = B A^-1 and a second solve
    // gives A^-1 B A^-1.
    let mcrb_raw = lu.solve(&a_inv_b.transpose()).ok_or_else(|| Error::IllConditioned {
        condition: cond_a,
        context: "A solve".into(),
    })?;
    let mcrb = (mcrb_raw + mcrb_raw.transpose()) * 0.5;

    let d = eta_true.as_vector5() - eta0.as_vector5();
    let bias_matrix = d * d.transpose();
    let lb = mcrb + bias_matrix;

    let peb_mcrb = position_peb(&mcrb);
    let peb_lb = position_peb(&lb);
    let bias_norm = (eta_true.position - eta0.position).norm();
    Ok(BoundsReport {
        eta0: *eta0,
        a: *a,
        b: *b,
        mcrb,
        lb,
        bias_matrix,
        peb_mcrb,
        peb_lb,
        bias_norm,
        cond_a,
    })
}

/// Position error bound: sqrt of the trace of the 3x3 position block.
pub fn position_peb(m: &Matrix5) -> f64 {
    (m[(2, 2)] + m[(3, 3)] + m[(4, 4)]).max(0.0).sqrt()
}

fn condition_number(m: &Matrix5) -> f64 {
    let svd = m.svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Classical CRB with perfect model knowledge: Fisher information from the
/// true-model derivatives at the true parameter.
#[derive(Debug, Clone)]
pub struct CrbReport {
    pub fim: Matrix5,
    pub crb: Matrix5,
    pub peb_crb: f64,
    pub cond_fim: f64,
}

pub fn classical_crb(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<CrbReport> {
    check_noise_var(noise_var)?;
    let true_weights = make_weights(profile, model, WeightMode::True);
    let jac = jacobian_mu(scene, eta_true, &true_weights, pilot_energy)?;
    let scale = 2.0 / noise_var;
    let mut fim = Matrix5::zeros();
    for i in 0..5 {
        for j in i..5 {
            let v = scale * jac.col_dot(i, j).re;
            fim[(i, j)] = v;
            fim[(j, i)] = v;
        }
    }
    let cond_fim = condition_number(&fim);
    if !cond_fim.is_finite() || cond_fim > MAX_CONDITION {
        return Err(Error::IllConditioned {
            condition: cond_fim,
            context: "Fisher information matrix".to_string(),
        });
    }
    let crb_raw = fim
        .lu()
        .solve(&Matrix5::identity())
        .ok_or_else(|| Error::IllConditioned { condition: cond_fim, context: "FIM solve".into() })?;
    let crb = (crb_raw + crb_raw.transpose()) * 0.5;
    Ok(CrbReport { fim, crb, peb_crb: position_peb(&crb), cond_fim })
}

/// Full mismatch analysis of one (scene, profile, amplitude-model) cell at
/// one noise level: pseudo-true solve, A/B assembly, bounds, and the
/// perfect-knowledge CRB baseline.
#[derive(Debug, Clone)]
pub struct MismatchReport {
    pub pseudo: PseudoTrue,
    pub bounds: BoundsReport,
    pub crb: CrbReport,
}

pub fn mismatch_analysis(
    scene: &SceneConfig,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    noise_var: f64,
    settings: &OptimizerSettings,
) -> Result<MismatchReport> {
    let pseudo = pseudo_true(scene, eta_true, profile, model, pilot_energy, settings)?;
    let bounds = bounds_at(scene, &pseudo.eta0, eta_true, profile, model, pilot_energy, noise_var)?;
    let crb = classical_crb(scene, eta_true, profile, model, pilot_energy, noise_var)?;
    Ok(MismatchReport { pseudo, bounds, crb })
}

/// Assemble the MCRB/LB report at a precomputed pseudo-true parameter, so
/// sweeps can reuse one pseudo-true solve across noise levels.
pub fn bounds_at(
    scene: &SceneConfig,
    eta0: &ParameterVector,
    eta_true: &ParameterVector,
    profile: &PhaseProfile,
    model: &AmplitudeModel,
    pilot_energy: f64,
    noise_var: f64,
) -> Result<BoundsReport> {
    let true_weights = make_weights(profile, model, WeightMode::True);
    let assumed_weights = make_weights(profile, model, WeightMode::Assumed);
    let mu_true = noise_free_mean(scene, eta_true, &true_weights, pilot_energy)?;
    let a = matrix_a_from(scene, eta0, &mu_true, &assumed_weights, pilot_energy, noise_var)?;
    let b = matrix_b_from(scene, eta0, &mu_true, &assumed_weights, pilot_energy, noise_var)?;
    assemble_bounds(&a, &b, eta0, eta_true)
}
