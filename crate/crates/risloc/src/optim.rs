//! Multi-start derivative-free minimization over R^3.
//!
//! The concentrated position searches are smooth but nonconvex, so each
//! start runs a Nelder-Mead simplex descent, optionally re-seeded at its own
//! solution with a shrunken simplex to tighten the final point. Multi-start
//! picks the best finite result across starts and reports a per-start log
//! merged in start order, independent of scheduling.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Termination and start-generation controls.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerSettings {
    /// Iteration cap per simplex run.
    pub max_iters: usize,
    /// Simplex size below which a run stops, in the units of x (meters).
    pub x_tol: f64,
    /// Relative objective spread below which a run stops.
    pub f_tol: f64,
    /// Number of starts used by multi-start callers.
    pub n_starts: usize,
    /// Seed for the caller's start-generation rule.
    pub start_seed: u64,
    /// Initial simplex edge relative to each coordinate magnitude.
    pub initial_step_rel: f64,
    /// Absolute floor for the initial simplex edge.
    pub initial_step_min: f64,
    /// Re-runs from the converged point with a simplex 100x above x_tol.
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iters: 2000,
            x_tol: 1e-7,
            f_tol: 1e-12,
            n_starts: 10,
            start_seed: 0,
            initial_step_rel: 0.05,
            initial_step_min: 1e-3,
            restarts: 2,
        }
    }
}

/// Outcome of one local minimization.
#[derive(Debug, Clone, Copy)]
pub struct LocalMin {
    pub x: Vector3<f64>,
    pub f: f64,
    pub converged: bool,
    /// A non-finite objective value was encountered.
    pub diverged: bool,
    pub iters: usize,
    pub evals: usize,
}

/// One multi-start record.
#[derive(Debug, Clone, Copy)]
pub struct StartRecord {
    pub index: usize,
    pub start: Vector3<f64>,
    pub result: LocalMin,
}

/// Best-of-starts outcome plus the full per-start log.
#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best: LocalMin,
    pub best_index: usize,
    pub log: Vec<StartRecord>,
}

/// Minimize `objective` from `x0`. Runs Nelder-Mead, then `restarts`
/// fresh small simplices at the incumbent to polish it.
pub fn local_minimize<F: Fn(&Vector3<f64>) -> f64>(
    objective: F,
    x0: Vector3<f64>,
    settings: &OptimizerSettings,
) -> LocalMin {
    let mut evals = 0usize;
    let mut f = |x: &Vector3<f64>| {
        evals += 1;
        objective(x)
    };

    let step0 = initial_step(x0, settings);
    let mut run = nelder_mead(&mut f, x0, step0, settings);
    for _ in 0..settings.restarts {
        if run.diverged {
            break;
        }
        let polish_step = Vector3::repeat((settings.x_tol * 100.0).max(1e-12));
        let next = nelder_mead(&mut f, run.x, polish_step, settings);
        let improved = next.f < run.f;
        run = LocalMin {
            x: if improved { next.x } else { run.x },
            f: run.f.min(next.f),
            converged: run.converged || next.converged,
            diverged: next.diverged,
            iters: run.iters + next.iters,
            evals: 0,
        };
    }
    run.evals = evals;
    run
}

/// Run one local minimization per start and keep the best finite result.
/// Fails with [`Error::NoSolution`] when every start diverges or never sees
/// a finite objective value.
pub fn multi_start<F: Fn(&Vector3<f64>) -> f64 + Sync>(
    objective: F,
    starts: &[Vector3<f64>],
    settings: &OptimizerSettings,
) -> Result<MultiStartResult> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("multi_start needs at least one start".into()));
    }
    let log: Vec<StartRecord> = starts
        .par_iter()
        .enumerate()
        .map(|(index, &start)| StartRecord {
            index,
            start,
            result: local_minimize(&objective, start, settings),
        })
        .collect();
    let best = log
        .iter()
        .filter(|r| r.result.f.is_finite())
        .min_by(|a, b| {
            (a.result.f, a.index)
                .partial_cmp(&(b.result.f, b.index))
                .unwrap()
        })
        .ok_or_else(|| Error::NoSolution("all starts diverged".to_string()))?;
    Ok(MultiStartResult { best: best.result, best_index: best.index, log })
}

fn initial_step(x0: Vector3<f64>, settings: &OptimizerSettings) -> Vector3<f64> {
    x0.map(|c| (c.abs() * settings.initial_step_rel).max(settings.initial_step_min))
}

fn nelder_mead<F: FnMut(&Vector3<f64>) -> f64>(
    f: &mut F,
    x0: Vector3<f64>,
    step: Vector3<f64>,
    settings: &OptimizerSettings,
) -> LocalMin {
    const DIM: usize = 3;
    let mut xs = [x0; DIM + 1];
    for i in 0..DIM {
        xs[i + 1][i] += step[i];
    }
    let mut fs = [0.0f64; DIM + 1];
    let mut diverged = false;
    for i in 0..=DIM {
        fs[i] = f(&xs[i]);
        if fs[i].is_nan() {
            diverged = true;
        }
    }
    if diverged {
        let (x, fv) = best_finite(&xs, &fs).unwrap_or((x0, f64::NAN));
        return LocalMin { x, f: fv, converged: false, diverged: true, iters: 0, evals: 0 };
    }

    let mut iters = 0usize;
    let mut converged = false;
    while iters < settings.max_iters {
        iters += 1;
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap_or(std::cmp::Ordering::Equal));
        let (b, sw, w) = (order[0], order[DIM - 1], order[DIM]);

        let size = (1..=DIM)
            .map(|k| (xs[order[k]] - xs[b]).norm())
            .fold(0.0, f64::max);
        let spread = (fs[w] - fs[b]).abs();
        let scale = fs[b].abs().max(fs[w].abs()).max(f64::MIN_POSITIVE);
        if size < settings.x_tol || spread <= settings.f_tol * scale {
            converged = true;
            break;
        }

        let centroid = order[..DIM]
            .iter()
            .fold(Vector3::zeros(), |acc, &i| acc + xs[i])
            / DIM as f64;

        let reflect = centroid + (centroid - xs[w]);
        let f_r = f(&reflect);
        if f_r.is_nan() {
            diverged = true;
            break;
        }

        if f_r < fs[b] {
            let expand = centroid + 2.0 * (centroid - xs[w]);
            let f_e = f(&expand);
            if f_e.is_nan() {
                diverged = true;
                break;
            }
            if f_e < f_r {
                xs[w] = expand;
                fs[w] = f_e;
            } else {
                xs[w] = reflect;
                fs[w] = f_r;
            }
        } else if f_r < fs[sw] {
            xs[w] = reflect;
            fs[w] = f_r;
        } else {
            // Contract towards the better of the worst vertex and its
            // reflection; shrink the whole simplex if that fails too.
            let (towards, f_towards) = if f_r < fs[w] { (reflect, f_r) } else { (xs[w], fs[w]) };
            let contract = centroid + 0.5 * (towards - centroid);
            let f_c = f(&contract);
            if f_c.is_nan() {
                diverged = true;
                break;
            }
            if f_c <= f_towards {
                xs[w] = contract;
                fs[w] = f_c;
            } else {
                for k in 1..=DIM {
                    let i = order[k];
                    xs[i] = xs[b] + 0.5 * (xs[i] - xs[b]);
                    fs[i] = f(&xs[i]);
                    if fs[i].is_nan() {
                        diverged = true;
                    }
                }
                if diverged {
                    break;
                }
            }
        }
    }

    let (x, fv) = best_finite(&xs, &fs).unwrap_or((x0, f64::NAN));
    LocalMin { x, f: fv, converged: converged && !diverged, diverged, iters, evals: 0 }
}

fn best_finite(xs: &[Vector3<f64>; 4], fs: &[f64; 4]) -> Option<(Vector3<f64>, f64)> {
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for i in 0..4 {
        if fs[i].is_finite() && best.map_or(true, |(_, fb)| fs[i] < fb) {
            best = Some((xs[i], fs[i]));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> OptimizerSettings {
        OptimizerSettings::default()
    }

    #[test]
    fn quadratic_converges_to_center() {
        let c = Vector3::new(1.5, -2.0, 0.7);
        let obj = |x: &Vector3<f64>| (x - c).norm_squared();
        for start in [Vector3::zeros(), Vector3::new(10.0, 10.0, -10.0)] {
            let r = local_minimize(obj, start, &settings());
            assert!(r.converged);
            assert!(!r.diverged);
            assert!((r.x - c).norm() < 1e-6, "off by {}", (r.x - c).norm());
            assert!(r.f <= obj(&start));
        }
    }

    #[test]
    fn constant_objective_stops_at_start() {
        let obj = |_: &Vector3<f64>| 4.2;
        let x0 = Vector3::new(1.0, 2.0, 3.0);
        let r = local_minimize(obj, x0, &settings());
        assert!(r.converged);
        assert_eq!(r.x, x0);
        assert_eq!(r.f, 4.2);
    }

    #[test]
    fn rosenbrock_3d_from_near_optimum() {
        let obj = |x: &Vector3<f64>| {
            let mut f = 0.0;
            for i in 0..2 {
                f += 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2);
            }
            f
        };
        let mut s = settings();
        s.max_iters = 5000;
        s.x_tol = 1e-10;
        s.restarts = 3;
        let r = local_minimize(obj, Vector3::new(0.9, 0.85, 0.8), &s);
        let opt = Vector3::new(1.0, 1.0, 1.0);
        assert!((r.x - opt).norm() < 1e-6, "off by {}", (r.x - opt).norm());
    }

    #[test]
    fn multi_start_single_start_equals_local() {
        let obj = |x: &Vector3<f64>| (x - Vector3::new(0.3, 0.0, 0.0)).norm_squared();
        let start = Vector3::new(2.0, 1.0, 1.0);
        let local = local_minimize(obj, start, &settings());
        let multi = multi_start(obj, &[start], &settings()).unwrap();
        assert_eq!(multi.best_index, 0);
        assert_eq!(multi.best.x, local.x);
        assert_eq!(multi.log.len(), 1);
    }

    #[test]
    fn multi_start_duplicates_are_deterministic() {
        let obj = |x: &Vector3<f64>| x.norm_squared() + x.x.sin() * 0.1;
        let start = Vector3::new(1.0, -1.0, 0.5);
        let a = multi_start(obj, &[start, start, start], &settings()).unwrap();
        let b = multi_start(obj, &[start], &settings()).unwrap();
        assert_eq!(a.best.x, b.best.x);
        assert_eq!(a.best.f, b.best.f);
        assert_eq!(a.best_index, 0);
    }

    #[test]
    fn multi_start_finds_deeper_basin() {
        // Double well along x, tilted so the x < 0 basin is deeper.
        let obj = |x: &Vector3<f64>| {
            (x.x * x.x - 1.0).powi(2) + 0.3 * x.x + x.y * x.y + x.z * x.z
        };
        let starts = [Vector3::new(0.9, 0.2, -0.1), Vector3::new(-0.9, 0.2, -0.1)];
        let r = multi_start(obj, &starts, &settings()).unwrap();
        assert_eq!(r.best_index, 1);
        assert!(r.best.x.x < -0.9);
        // Monotone improvement versus every start.
        for rec in &r.log {
            assert!(rec.result.f <= obj(&rec.start) + 1e-12);
        }
    }

    #[test]
    fn nan_objective_flags_divergence() {
        let obj = |x: &Vector3<f64>| {
            if x.norm() > 1.0 {
                f64::NAN
            } else {
                x.norm_squared()
            }
        };
        let r = local_minimize(obj, Vector3::new(5.0, 5.0, 5.0), &settings());
        assert!(r.diverged);

        let err = multi_start(obj, &[Vector3::new(5.0, 5.0, 5.0)], &settings());
        assert!(matches!(err, Err(Error::NoSolution(_))));

        // A mix keeps the finite start.
        let ok = multi_start(
            obj,
            &[Vector3::new(5.0, 5.0, 5.0), Vector3::new(0.2, 0.1, 0.0)],
            &settings(),
        )
        .unwrap();
        assert_eq!(ok.best_index, 1);
        assert!(ok.best.x.norm() < 1e-5);
    }
}
