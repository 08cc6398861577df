//! Sweep drivers producing deterministic CSV artifacts.
//!
//! Every row carries its full sweep coordinates. Work distributes over a
//! parallel cell grid, but rows are assembled in a fixed order and floats are
//! printed with 9 significant digits, so identical configs and seeds yield
//! byte-identical files under any thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bounds::{bounds_at, classical_crb, pseudo_true, PseudoTrue};
use crate::error::{Error, Result};
use crate::estimator::{monte_carlo_rmse_with_init, AngleInitializer};
use crate::ris_model::{make_weights, PhaseProfile, WeightMode};
use crate::seeds::{path_seed, TAG_PROFILE, TAG_PSEUDO_STARTS, TAG_TRIAL};
use crate::signal::noise_var_for_snr;

use super::config::ExperimentConfig;

/// A named artifact ready to be written in the configured formats.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub name: String,
    pub csv: String,
}

impl SweepOutput {
    /// Write the CSV (and the gnuplot .dat variant when requested); returns
    /// the created paths.
    pub fn write(&self, dir: &Path, formats: &[String]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for format in formats {
            match format.as_str() {
                "csv" => {
                    let path = dir.join(format!("{}.csv", self.name));
                    std::fs::write(&path, &self.csv)?;
                    written.push(path);
                }
                "gnuplot" => {
                    let path = dir.join(format!("{}.dat", self.name));
                    std::fs::write(&path, csv_to_gnuplot(&self.csv))?;
                    written.push(path);
                }
                other => {
                    return Err(Error::Config(format!("unsupported output format {other:?}")))
                }
            }
        }
        Ok(written)
    }
}

fn csv_to_gnuplot(csv: &str) -> String {
    let mut out = String::with_capacity(csv.len() + 2);
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&line.replace(',', " "));
        out.push('\n');
    }
    out
}

/// Floats are written with 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        // Avoid the sign of negative zero leaking into the output.
        return "0.00000000e0".to_string();
    }
    format!("{x:.8e}")
}

struct BetaCell {
    /// Per SNR index: (peb_lb, peb_mcrb, bias_norm, peb_crb).
    per_snr: Vec<(f64, f64, f64, f64)>,
    profile_seed: u64,
}

/// LB, MCRB, bias and perfect-knowledge CRB per (beta_min, SNR, profile).
pub fn run_sweep_beta(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let scene = cfg.scene(None)?;
    let eta_true = cfg.eta_true(&scene);
    let betas = &cfg.model.beta_min;
    let snrs = &cfg.signal.snr_db;
    let master = cfg.run.master_seed;
    let e_s = cfg.signal.e_s;

    let cells: Vec<(usize, usize)> = (0..betas.len())
        .flat_map(|bi| (0..cfg.run.n_profiles).map(move |k| (bi, k)))
        .collect();
    let computed: Result<Vec<BetaCell>> = cells
        .par_iter()
        .map(|&(bi, k)| {
            let model = cfg.amplitude_model(betas[bi])?;
            let profile_seed = path_seed(master, &[TAG_PROFILE, k as u64]);
            let profile =
                PhaseProfile::random(cfg.signal.t, scene.num_elements(), profile_seed)?;
            let opt = cfg
                .optimizer_settings(path_seed(master, &[TAG_PSEUDO_STARTS, bi as u64, k as u64]));
            let pseudo = pseudo_true(&scene, &eta_true, &profile, &model, e_s, &opt)?;
            let wt = make_weights(&profile, &model, WeightMode::True);
            let mut per_snr = Vec::with_capacity(snrs.len());
            for &snr in snrs {
                let n0 = noise_var_for_snr(&scene, &eta_true, &wt, snr, e_s)?;
                let (peb_lb, peb_mcrb, bias_norm) =
                    match bounds_at(&scene, &pseudo.eta0, &eta_true, &profile, &model, e_s, n0) {
                        Ok(rep) => (rep.peb_lb, rep.peb_mcrb, rep.bias_norm),
                        Err(Error::IllConditioned { .. }) => {
                            let bias = (eta_true.position - pseudo.eta0.position).norm();
                            (f64::NAN, f64::NAN, bias)
                        }
                        Err(e) => return Err(e),
                    };
                let peb_crb = match classical_crb(&scene, &eta_true, &profile, &model, e_s, n0) {
                    Ok(crb) => crb.peb_crb,
                    Err(Error::IllConditioned { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                };
                per_snr.push((peb_lb, peb_mcrb, bias_norm, peb_crb));
            }
            Ok(BetaCell { per_snr, profile_seed })
        })
        .collect();
    let computed = computed?;

    let mut csv = String::from("beta_min,snr_db,peb_lb,peb_mcrb,bias_norm,peb_crb_perfect,profile_seed\n");
    for bi in 0..betas.len() {
        for (si, &snr) in snrs.iter().enumerate() {
            for k in 0..cfg.run.n_profiles {
                let cell = &computed[bi * cfg.run.n_profiles + k];
                let (peb_lb, peb_mcrb, bias_norm, peb_crb) = cell.per_snr[si];
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt_float(betas[bi]),
                    fmt_float(snr),
                    fmt_float(peb_lb),
                    fmt_float(peb_mcrb),
                    fmt_float(bias_norm),
                    fmt_float(peb_crb),
                    cell.profile_seed
                ));
            }
        }
    }
    Ok(SweepOutput { name: "sweep_beta".to_string(), csv })
}

/// Profile-averaged LB and perfect-knowledge CRB versus RIS size. Averages
/// are taken over the bound matrices (equivalently over squared PEBs), and
/// cells whose curvature matrix is numerically singular are dropped from the
/// average; `n_profiles` records how many cells each row actually used.
pub fn run_sweep_size(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.signal.snr_db.len() != 1 {
        return Err(Error::Config(format!(
            "sweep-size expects exactly one snr_db entry, got {}",
            cfg.signal.snr_db.len()
        )));
    }
    let snr = cfg.signal.snr_db[0];
    let e_s = cfg.signal.e_s;
    let master = cfg.run.master_seed;
    let betas = &cfg.model.beta_min;

    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    for si in 0..cfg.scene.ris_sizes.len() {
        for bi in 0..betas.len() {
            for k in 0..cfg.run.n_profiles {
                cells.push((si, bi, k));
            }
        }
    }
    let computed: Result<Vec<Option<(f64, f64)>>> = cells
        .par_iter()
        .map(|&(si, bi, k)| {
            let m = cfg.scene.ris_sizes[si];
            let side = (m as f64).sqrt().round() as usize;
            let scene = cfg.scene(Some(side))?;
            let eta_true = cfg.eta_true(&scene);
            let model = cfg.amplitude_model(betas[bi])?;
            let profile_seed = path_seed(master, &[TAG_PROFILE, k as u64]);
            let profile = PhaseProfile::random(cfg.signal.t, m, profile_seed)?;
            let opt = cfg.optimizer_settings(path_seed(
                master,
                &[TAG_PSEUDO_STARTS, si as u64, bi as u64, k as u64],
            ));
            let wt = make_weights(&profile, &model, WeightMode::True);
            let n0 = noise_var_for_snr(&scene, &eta_true, &wt, snr, e_s)?;
            let pseudo = match pseudo_true(&scene, &eta_true, &profile, &model, e_s, &opt) {
                Ok(p) => p,
                Err(Error::NoSolution(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let lb = match bounds_at(&scene, &pseudo.eta0, &eta_true, &profile, &model, e_s, n0) {
                Ok(rep) => rep.peb_lb,
                Err(Error::IllConditioned { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let crb = match classical_crb(&scene, &eta_true, &profile, &model, e_s, n0) {
                Ok(c) => c.peb_crb,
                Err(Error::IllConditioned { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some((lb, crb)))
        })
        .collect();
    let computed = computed?;

    let mut csv = String::from("m,beta_min,avg_peb_lb,avg_peb_crb,n_profiles\n");
    for (si, &m) in cfg.scene.ris_sizes.iter().enumerate() {
        for (bi, &beta) in betas.iter().enumerate() {
            let base = (si * betas.len() + bi) * cfg.run.n_profiles;
            let used: Vec<(f64, f64)> = (0..cfg.run.n_profiles)
                .filter_map(|k| computed[base + k])
                .collect();
            let n = used.len();
            let (avg_lb, avg_crb) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean_lb_sq = used.iter().map(|(lb, _)| lb * lb).sum::<f64>() / n as f64;
                let mean_crb_sq = used.iter().map(|(_, crb)| crb * crb).sum::<f64>() / n as f64;
                (mean_lb_sq.sqrt(), mean_crb_sq.sqrt())
            };
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                m,
                fmt_float(beta),
                fmt_float(avg_lb),
                fmt_float(avg_crb),
                n
            ));
        }
    }
    Ok(SweepOutput { name: "sweep_size".to_string(), csv })
}

/// Bounds and empirical MML RMSE versus SNR on one fixed phase profile.
pub fn run_sweep_snr(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let scene = cfg.scene(None)?;
    let eta_true = cfg.eta_true(&scene);
    let betas = &cfg.model.beta_min;
    let snrs = &cfg.signal.snr_db;
    let master = cfg.run.master_seed;
    let e_s = cfg.signal.e_s;

    let profile_seed = path_seed(master, &[TAG_PROFILE, 0]);
    let profile = PhaseProfile::random(cfg.signal.t, scene.num_elements(), profile_seed)?;
    let mml = cfg.mml_settings(0);
    let init = AngleInitializer::new(&scene, &profile, e_s, &mml.jacobi)?;

    let mut csv =
        String::from("snr_db,beta_min,rmse,rmse_stderr,peb_lb,peb_mcrb,bias_norm\n");
    for (bi, &beta) in betas.iter().enumerate() {
        let model = cfg.amplitude_model(beta)?;
        let opt =
            cfg.optimizer_settings(path_seed(master, &[TAG_PSEUDO_STARTS, bi as u64, 0]));
        let pseudo = pseudo_true(&scene, &eta_true, &profile, &model, e_s, &opt)?;
        let wt = make_weights(&profile, &model, WeightMode::True);
        for (si, &snr) in snrs.iter().enumerate() {
            let n0 = noise_var_for_snr(&scene, &eta_true, &wt, snr, e_s)?;
            let rep = bounds_at(&scene, &pseudo.eta0, &eta_true, &profile, &model, e_s, n0)?;
            let rmse = monte_carlo_rmse_with_init(
                &scene,
                &eta_true,
                &profile,
                &model,
                snr,
                e_s,
                cfg.run.n_trials,
                path_seed(master, &[TAG_TRIAL, bi as u64, si as u64]),
                &mml,
                &init,
            )?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_float(snr),
                fmt_float(beta),
                fmt_float(rmse.rmse),
                fmt_float(rmse.stderr),
                fmt_float(rep.peb_lb),
                fmt_float(rep.peb_mcrb),
                fmt_float(rep.bias_norm)
            ));
        }
    }
    Ok(SweepOutput { name: "sweep_snr".to_string(), csv })
}

/// Pseudo-true parameters and bound scalars per (beta_min, SNR) on the first
/// profile, with condition and stationarity diagnostics.
pub fn run_pseudo_true(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let scene = cfg.scene(None)?;
    let eta_true = cfg.eta_true(&scene);
    let master = cfg.run.master_seed;
    let e_s = cfg.signal.e_s;
    let profile_seed = path_seed(master, &[TAG_PROFILE, 0]);
    let profile = PhaseProfile::random(cfg.signal.t, scene.num_elements(), profile_seed)?;

    let solves: Result<Vec<PseudoTrue>> = cfg
        .model
        .beta_min
        .par_iter()
        .enumerate()
        .map(|(bi, &beta)| {
            let model = cfg.amplitude_model(beta)?;
            let opt =
                cfg.optimizer_settings(path_seed(master, &[TAG_PSEUDO_STARTS, bi as u64, 0]));
            pseudo_true(&scene, &eta_true, &profile, &model, e_s, &opt)
        })
        .collect();
    let solves = solves?;

    let mut csv = String::from(
        "beta_min,snr_db,alpha0_re,alpha0_im,x0_m,y0_m,z0_m,bias_norm,peb_mcrb,peb_lb,cond_a,stationarity,objective,profile_seed\n",
    );
    for (bi, &beta) in cfg.model.beta_min.iter().enumerate() {
        let model = cfg.amplitude_model(beta)?;
        let pseudo = &solves[bi];
        let wt = make_weights(&profile, &model, WeightMode::True);
        for &snr in &cfg.signal.snr_db {
            let n0 = noise_var_for_snr(&scene, &eta_true, &wt, snr, e_s)?;
            let (peb_lb, peb_mcrb, bias_norm, cond_a) =
                match bounds_at(&scene, &pseudo.eta0, &eta_true, &profile, &model, e_s, n0) {
                    Ok(rep) => (rep.peb_lb, rep.peb_mcrb, rep.bias_norm, rep.cond_a),
                    Err(Error::IllConditioned { condition, .. }) => {
                        let bias = (eta_true.position - pseudo.eta0.position).norm();
                        (f64::NAN, f64::NAN, bias, condition)
                    }
                    Err(e) => return Err(e),
                };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_float(beta),
                fmt_float(snr),
                fmt_float(pseudo.eta0.alpha_re),
                fmt_float(pseudo.eta0.alpha_im),
                fmt_float(pseudo.eta0.position.x),
                fmt_float(pseudo.eta0.position.y),
                fmt_float(pseudo.eta0.position.z),
                fmt_float(bias_norm),
                fmt_float(peb_mcrb),
                fmt_float(peb_lb),
                fmt_float(cond_a),
                fmt_float(pseudo.stationarity),
                fmt_float(pseudo.objective),
                profile_seed
            ));
        }
    }
    Ok(SweepOutput { name: "pseudo_true".to_string(), csv })
}
