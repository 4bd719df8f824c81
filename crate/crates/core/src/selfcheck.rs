//! Installation self-test: the invariant suites at small grid sizes.

use std::f64::consts::PI;

use faer::Mat;
use rand::Rng;

use crate::analysis::oracle_comparison;
use crate::c64;
use crate::propagators::{
    ehrenfest_time, hamiltonian_egorov_residual, metaplectic_egorov_residual, quantize_cat, quantize_symplectic, quantum_cat_matrix, FlowDescriptor,
    HamiltonianSpectrum, Propagator, SymplecticMatrix,
};
use crate::rng::trial_rng;
use crate::states::{CoherentSpec, KrausFamily};
use crate::torus_ops::{GridSize, Symbol};
use crate::trajectory::{Experiment, ExperimentConfig, InitialState};
use crate::Result;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfCheckOptions {
    /// Replace the cat propagator by one with a wrong quadratic phase; the
    /// Egorov check must then fail.
    pub corrupt_cat_phase: bool,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelfCheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckOutcome { name, passed, detail });
    }
}

/// Uniform random coefficients in the unit square for `|k|, |m| ≤ k_max`.
pub fn random_trig_symbol<R: Rng + ?Sized>(rng: &mut R, k_max: i64) -> Symbol {
    let mut terms = Vec::new();
    for k in -k_max..=k_max {
        for m in -k_max..=k_max {
            terms.push(((k, m), c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)));
        }
    }
    Symbol::from_coeffs(terms)
}

/// The explicit cat matrix with its `j²` phase tripled.
pub fn corrupted_cat(grid: GridSize) -> Result<Propagator> {
    grid.require_even()?;
    let n = grid.n() as i64;
    let scale = 1.0 / (n as f64).sqrt();
    let m = Mat::from_fn(grid.n(), grid.n(), |j, k| {
        let (j, k) = (j as i64, k as i64);
        let s = (2 * k * k - 2 * j * k + 3 * j * j).rem_euclid(2 * n);
        c64::cis(PI * s as f64 / n as f64) * scale
    });
    Propagator::from_matrix(grid, FlowDescriptor::linear(SymplecticMatrix::cat()), m)
}

fn check_exact_egorov(opts: SelfCheckOptions) -> Result<(bool, String)> {
    let mut rng = trial_rng(0x5e1f, 0);
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 32, 64] {
        let grid = GridSize::new(n)?;
        let cat = if opts.corrupt_cat_phase { corrupted_cat(grid)? } else { quantize_cat(grid)? };
        let e = quantize_symplectic(&SymplecticMatrix::elliptic(), grid)?;
        let k_max = ((n / 4) as i64 - 1).min(3);
        for _ in 0..10 {
            let a = random_trig_symbol(&mut rng, k_max);
            worst = worst.max(metaplectic_egorov_residual(&cat, &a)?);
            worst = worst.max(metaplectic_egorov_residual(&e, &a)?);
        }
    }
    Ok((worst <= 1e-9, format!("max residual {worst:.2e} (limit 1e-9)")))
}

fn check_cat_cross() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in [8usize, 32] {
        let grid = GridSize::new(n)?;
        let u = quantize_symplectic(&SymplecticMatrix::cat(), grid)?.matrix();
        let m = quantum_cat_matrix(grid)?;
        let tr: c64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| u[(i, j)].conj() * m[(i, j)]).sum();
        worst = worst.max((tr.norm() - n as f64).abs());
        let e = quantize_symplectic(&SymplecticMatrix::elliptic(), grid)?.matrix();
        let e3 = &e * &e * &e;
        let tr3: c64 = (0..n).map(|i| e3[(i, i)]).sum();
        worst = worst.max((tr3.norm() - n as f64).abs());
    }
    Ok((worst <= 1e-6, format!("max |tr| deviation {worst:.2e} (limit 1e-6)")))
}

fn check_unitarity() -> Result<(bool, String)> {
    let grid = GridSize::new(64)?;
    let mut worst = quantize_cat(grid)?.unitarity_defect();
    worst = worst.max(quantize_symplectic(&SymplecticMatrix::m3(), grid)?.unitarity_defect());
    let spectrum = HamiltonianSpectrum::new(&Symbol::cos_sum(), GridSize::new(32)?)?;
    worst = worst.max(spectrum.propagator(0.05)?.unitarity_defect());
    Ok((worst <= 1e-10, format!("max ‖UU* − I‖ {worst:.2e} (limit 1e-10)")))
}

fn check_resolution_of_identity() -> Result<(bool, String)> {
    let fam = KrausFamily::wrapped_gaussian(0.1)?;
    let grid = GridSize::new(64)?;
    let q_count = 512;
    let mut acc = vec![0.0; grid.n()];
    for i in 0..q_count {
        let q = (i as f64 + 0.5) / q_count as f64;
        for (a, d) in acc.iter_mut().zip(fam.kraus_diagonal(q, grid)) {
            *a += d * d / q_count as f64;
        }
    }
    let worst = acc.iter().map(|a| (a - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e} (limit 1e-6)")))
}

fn check_hamiltonian_egorov() -> Result<(bool, String)> {
    let a = Symbol::cos_mode(1, 0);
    let mut residuals = Vec::new();
    for n in [32usize, 64] {
        let u = HamiltonianSpectrum::new(&Symbol::cos_sum(), GridSize::new(n)?)?.propagator(0.05)?;
        residuals.push(hamiltonian_egorov_residual(&u, &a)?.max_entry);
    }
    let ratio = residuals[0] / residuals[1];
    Ok((ratio >= 1.5, format!("residual {:.2e} -> {:.2e}, ratio {ratio:.2} (need ≥ 1.5)", residuals[0], residuals[1])))
}

fn check_oracle_equivalence() -> Result<(bool, String)> {
    let grid = GridSize::new(8)?;
    let trials = 10_000;
    let spec = CoherentSpec::new(0.1, 0.1, 0.5, 0.1)?;
    let cfg = ExperimentConfig {
        grid,
        initial: InitialState::Coherent(spec),
        kraus: KrausFamily::wrapped_gaussian(0.1)?,
        flow: FlowDescriptor::linear(SymplecticMatrix::cat()),
        n_steps: 1,
        trials,
        seed: 0x0ddba11,
    };
    let cmp = oracle_comparison(&Experiment::new(cfg)?, 64, 8)?;
    let limit = 3.0 * cmp.noise_tv;
    Ok((cmp.tv <= limit, format!("joint TV {:.4} (limit {limit:.4}, 3× expected noise)", cmp.tv)))
}

fn check_lyapunov() -> Result<(bool, String)> {
    let want = [(SymplecticMatrix::cat(), 0.962), (SymplecticMatrix::m2(), 1.317), (SymplecticMatrix::m3(), 2.063)];
    let mut worst: f64 = 0.0;
    for (m, g) in want {
        worst = worst.max((FlowDescriptor::linear(m).lyapunov() - g).abs());
    }
    let e = FlowDescriptor::linear(SymplecticMatrix::elliptic()).lyapunov();
    let t_e = ehrenfest_time(GridSize::new(2000)?, FlowDescriptor::linear(SymplecticMatrix::cat()).lyapunov());
    let ok = worst <= 0.005 && e == 0.0 && (t_e - 3.95).abs() < 0.01;
    Ok((ok, format!("max deviation {worst:.4}, elliptic {e}, cat Ehrenfest at N=2000 {t_e:.3}")))
}

fn check_odd_grid() -> Result<(bool, String)> {
    let err = quantize_cat(GridSize::new(9)?).err();
    let msg = err.map(|e| e.to_string()).unwrap_or_default();
    Ok((msg.contains("even"), format!("N = 9 rejected: {msg}")))
}

pub fn run_selfcheck(opts: SelfCheckOptions) -> SelfCheckReport {
    let mut report = SelfCheckReport::default();
    report.push("exact egorov (cat, elliptic)", check_exact_egorov(opts));
    report.push("cat generator word vs explicit matrix", check_cat_cross());
    report.push("unitarity", check_unitarity());
    report.push("resolution of identity", check_resolution_of_identity());
    report.push("hamiltonian egorov decay", check_hamiltonian_egorov());
    report.push("oracle equivalence", check_oracle_equivalence());
    report.push("lyapunov and ehrenfest", check_lyapunov());
    report.push("odd grid rejected", check_odd_grid());
    report
}
