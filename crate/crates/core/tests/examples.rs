//! Statistical checks and reproduction-scale runs for the trajectory and analysis layers.

use std::path::PathBuf;

use qtorus::analysis::{
    bin_density, breakdown_step, histogram, lyapunov_comparison, noise_floor, run_marginal_experiment, tv_distance, BREAKDOWN_TV,
};
use qtorus::config::RunConfig;
use qtorus::propagators::{quantize_cat, FlowDescriptor, SymplecticMatrix};
use qtorus::rng::trial_rng;
use qtorus::states::{coherent_state, wrapped_normal_pdf, CoherentSpec, KrausFamily};
use qtorus::torus_ops::GridSize;
use qtorus::trajectory::{classical_marginal, exact_quantum_density, sample_classical_batch, Experiment, InitialState};
use rand::Rng;

fn config(name: &str) -> RunConfig {
    RunConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn uniform_histogram_concentrates() {
    let mut rng = trial_rng(101, 0);
    let n = 100_000;
    let bins = 100;
    let samples: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let h = histogram(&samples, bins).unwrap();
    let dev = h.densities().iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    // Binomial bin counts: density sd is sqrt((1 - 1/B) B / n); five sd covers the max over B bins.
    let sd = ((1.0 - 1.0 / bins as f64) * bins as f64 / n as f64).sqrt();
    assert!(dev <= 5.0 * sd, "max deviation {dev} vs {}", 5.0 * sd);
}

#[test]
fn kraus_offsets_match_wrapped_gaussian() {
    let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
    let mut rng = trial_rng(102, 0);
    let samples: Vec<f64> = (0..100_000).map(|_| (0.5 + fam.sample_offset(&mut rng)).rem_euclid(1.0)).collect();
    let h = histogram(&samples, 100).unwrap();
    let law = bin_density(|q| wrapped_normal_pdf(q - 0.5, 0.1), 100).unwrap();
    let tv = tv_distance(&h, &law).unwrap();
    assert!(tv <= 0.02, "{tv}");
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn classical_outcomes_uncorrelated_for_point_mass() {
    let init = InitialState::Coherent(CoherentSpec::new(0.4, 0.7, 0.5, 0.1).unwrap());
    let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
    let flow = FlowDescriptor::linear(SymplecticMatrix::cat());
    let batch = sample_classical_batch(&flow, &init, &fam, 3, 100_000, 103);
    let q0: Vec<f64> = batch.iter().map(|t| t.q[0]).collect();
    for k in 1..=3 {
        let qk: Vec<f64> = batch.iter().map(|t| t.q[k]).collect();
        let r = pearson(&q0, &qk);
        assert!(r.abs() <= 0.02, "step {k}: r = {r}");
    }
}

#[test]
fn elliptic_marginal_has_period_three() {
    let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
    let flow = FlowDescriptor::linear(SymplecticMatrix::elliptic());
    let init = InitialState::Coherent(CoherentSpec::new(0.37, 0.81, 0.5, 0.1).unwrap());
    let m0 = classical_marginal(&flow, &init, &fam, 0);
    let m3 = classical_marginal(&flow, &init, &fam, 3);
    for i in 0..50 {
        let q = i as f64 / 50.0;
        assert!((m0.density(q) - m3.density(q)).abs() <= 1e-10);
    }
}

#[test]
fn exact_density_integrates_to_one() {
    let grid = GridSize::new(8).unwrap();
    let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
    let psi = coherent_state(&CoherentSpec::new(0.1, 0.1, 0.5, 0.1).unwrap(), grid).unwrap();
    let u = quantize_cat(grid).unwrap();
    for steps in 0..=2 {
        let table = exact_quantum_density(&psi, &fam, &u, steps, 32).unwrap();
        assert!((table.riemann_sum() - 1.0).abs() <= 1e-6, "{steps} steps: {}", table.riemann_sum());
    }
}

#[test]
fn reseeded_runs_agree_within_noise_floor() {
    let mut cfg = config("fig3.toml").experiment_config(Some(400)).unwrap();
    cfg.n_steps = 3;
    let a = run_marginal_experiment(&Experiment::new(cfg.clone()).unwrap(), 100).unwrap();
    cfg.seed += 1;
    let b = run_marginal_experiment(&Experiment::new(cfg.clone()).unwrap(), 100).unwrap();
    let floor = 3.0 * noise_floor(100, cfg.trials);
    for (ra, rb) in a.reports.iter().zip(&b.reports) {
        assert!((ra.tv_vs_classical - rb.tv_vs_classical).abs() <= floor);
        assert!((0.0..=1.0).contains(&ra.tv_vs_classical));
    }
}

#[test]
fn more_trials_lower_early_tv() {
    let mut cfg = config("fig3.toml").experiment_config(None).unwrap();
    cfg.n_steps = 1;
    let few = run_marginal_experiment(&Experiment::new(cfg.clone()).unwrap(), 100).unwrap();
    cfg.trials *= 4;
    let many = run_marginal_experiment(&Experiment::new(cfg).unwrap(), 100).unwrap();
    for (f, m) in few.reports.iter().zip(&many.reports) {
        assert!(m.noise_tv < f.noise_tv);
        assert!(m.tv_vs_classical < f.tv_vs_classical, "step {}: {} vs {}", f.step, m.tv_vs_classical, f.tv_vs_classical);
    }
}

#[test]
fn elliptic_outlasts_cat_at_step_six() {
    let cfg = config("fig7.toml");
    let base = cfg.experiment_config(None).unwrap();
    let e = run_marginal_experiment(&Experiment::new(base.clone()).unwrap(), cfg.bins).unwrap();
    let mut cat_cfg = base;
    cat_cfg.flow = FlowDescriptor::linear(SymplecticMatrix::cat());
    let cat = run_marginal_experiment(&Experiment::new(cat_cfg).unwrap(), cfg.bins).unwrap();
    assert!(e.reports[6].tv_vs_classical < cat.reports[6].tv_vs_classical);
}

#[test]
fn elliptic_breaks_down_last_among_matrices() {
    let cfg = config("fig5.toml");
    let matrices = [SymplecticMatrix::cat(), SymplecticMatrix::m2(), SymplecticMatrix::m3(), SymplecticMatrix::elliptic()];
    let entries = lyapunov_comparison(&matrices, &cfg.experiment_config(None).unwrap(), cfg.bins).unwrap();
    let e = entries[3].breakdown.step;
    assert!(entries[..3].iter().all(|x| x.breakdown.step < e));
    assert_eq!(breakdown_step(&entries[3].reports, BREAKDOWN_TV), entries[3].breakdown);
}

#[test]
fn hamiltonian_marginals_track_classical() {
    let cfg = config("fig6.toml");
    let mut exp_cfg = cfg.experiment_config(None).unwrap();
    exp_cfg.n_steps = 4;
    let run = run_marginal_experiment(&Experiment::new(exp_cfg).unwrap(), cfg.bins).unwrap();
    let tv: Vec<f64> = run.reports.iter().map(|r| r.tv_vs_classical).collect();
    assert!(tv.iter().all(|&t| t <= 0.15), "{tv:?}");
}
