// Temporary calibration scan (not part of the deliverable).
use risloc::bounds::{bounds_at, classical_crb, pseudo_true};
use risloc::experiments::ExperimentConfig;
use risloc::ris_model::{make_weights, PhaseProfile, WeightMode};
use risloc::seeds::{path_seed, TAG_PROFILE, TAG_PSEUDO_STARTS};
use risloc::signal::noise_var_for_snr;

fn main() {
    let cfg = ExperimentConfig::default();
    let scene = cfg.scene(None).unwrap();
    let eta = cfg.eta_true(&scene);
    let args: Vec<String> = std::env::args().collect();
    let lo: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let hi: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(12);
    for master in lo..=hi {
        let t0 = std::time::Instant::now();
        let profile_seed = path_seed(master, &[TAG_PROFILE, 0]);
        let profile = PhaseProfile::random(50, 2500, profile_seed).unwrap();
        let mut line = format!("master={master}");
        for (bi, beta) in [(0usize, 0.3), (1usize, 0.7)] {
            let model = cfg.amplitude_model(beta).unwrap();
            let opt =
                cfg.optimizer_settings(path_seed(master, &[TAG_PSEUDO_STARTS, bi as u64, 0]));
            let ps = pseudo_true(&scene, &eta, &profile, &model, 1.0, &opt).unwrap();
            let wt = make_weights(&profile, &model, WeightMode::True);
            let n0 = noise_var_for_snr(&scene, &eta, &wt, 10.0, 1.0).unwrap();
            let rep = bounds_at(&scene, &ps.eta0, &eta, &profile, &model, 1.0, n0).unwrap();
            let crb = classical_crb(&scene, &eta, &profile, &model, 1.0, n0).unwrap();
            line += &format!(
                "  beta={beta}: bias={:.4} mcrb10={:.4} crb10={:.4} stat={:.1e}",
                rep.bias_norm, rep.peb_mcrb, crb.peb_crb, ps.stationarity
            );
        }
        println!("{line}  ({:.1}s)", t0.elapsed().as_secs_f64());
    }
}
