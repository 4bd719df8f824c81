//! Comparisons between measured quantum trajectories and the classical law.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::propagators::{ehrenfest_time, FlowDescriptor, SymplecticMatrix};
use crate::torus_ops::{GridSize, Symbol};
use crate::trajectory::{classical_marginal, exact_quantum_density, sample_batch, DensityTable, Experiment, ExperimentConfig, Trajectory};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 100;

/// First step whose TV exceeds this counts as the breakdown of agreement.
pub const BREAKDOWN_TV: f64 = 0.3;

/// Finite-difference step of the growth probe.
pub const PROBE_STEP: f64 = 1e-5;

/// Side of the square grid of probe points (256 points).
pub const PROBE_SIDE: usize = 16;

/// A piecewise-constant density on `B` equal bins of `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDensity {
    densities: Vec<f64>,
}

impl BinnedDensity {
    pub fn from_densities(densities: Vec<f64>) -> Result<Self> {
        if densities.len() < 2 {
            return Err(Error::param("at least 2 bins are required"));
        }
        Ok(BinnedDensity { densities })
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Probability of bin `b`.
    pub fn mass(&self, b: usize) -> f64 {
        self.densities[b] / self.bins() as f64
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.bins()).map(|b| self.mass(b)).collect()
    }
}

fn bin_index(q: f64, bins: usize) -> usize {
    ((q.rem_euclid(1.0) * bins as f64) as usize).min(bins - 1)
}

/// Periodic histogram of samples in `T¹`, normalized as a density.
pub fn histogram(samples: &[f64], bins: usize) -> Result<BinnedDensity> {
    if bins < 2 {
        return Err(Error::param("at least 2 bins are required"));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts = vec![0usize; bins];
    for &q in samples {
        counts[bin_index(q, bins)] += 1;
    }
    let scale = bins as f64 / samples.len() as f64;
    Ok(BinnedDensity { densities: counts.into_iter().map(|c| c as f64 * scale).collect() })
}

/// `½ Σ_b |p_b − q_b| / B`.
pub fn tv_distance(p: &BinnedDensity, q: &BinnedDensity) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(Error::BinMismatch(p.bins(), q.bins()));
    }
    let sum: f64 = p.densities.iter().zip(&q.densities).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * sum / p.bins() as f64).clamp(0.0, 1.0))
}

fn gauss_legendre_16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Per-bin average of an analytic density by 16-point Gauss–Legendre.
pub fn bin_density<F: Fn(f64) -> f64>(density: F, bins: usize) -> Result<BinnedDensity> {
    if bins < 2 {
        return Err(Error::param("at least 2 bins are required"));
    }
    let rule = gauss_legendre_16();
    let width = 1.0 / bins as f64;
    let densities = (0..bins)
        .map(|b| {
            let mid = (b as f64 + 0.5) * width;
            rule.iter().map(|&(x, w)| 0.5 * w * density(mid + 0.5 * width * x)).sum()
        })
        .collect();
    Ok(BinnedDensity { densities })
}

/// TV between a histogram and an analytic density integrated per bin.
pub fn tv_to_density<F: Fn(f64) -> f64>(p: &BinnedDensity, density: F) -> Result<f64> {
    tv_distance(p, &bin_density(density, p.bins())?)
}

/// Typical TV between the histogram of `n` samples and its own law:
/// `½ Σ_b sqrt(2 p_b (1 − p_b) / (π n))`.
pub fn expected_noise_tv(law: &BinnedDensity, n: usize) -> f64 {
    law.masses().iter().map(|p| (2.0 * p * (1.0 - p).max(0.0) / (PI * n as f64)).sqrt()).sum::<f64>() * 0.5
}

/// The coarse bound `(B / trials)^{1/2}` on TV fluctuations.
pub fn noise_floor(bins: usize, trials: usize) -> f64 {
    (bins as f64 / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub step: usize,
    pub histogram: BinnedDensity,
    /// The classical marginal averaged over each bin.
    pub classical: BinnedDensity,
    pub tv_vs_classical: f64,
    /// Expected TV of a perfect sampler at this trial count.
    pub noise_tv: f64,
    pub trials: usize,
}

/// Histograms and TVs per step for an already sampled batch.
pub fn marginal_reports(cfg: &ExperimentConfig, trajectories: &[Trajectory], bins: usize) -> Result<Vec<MarginalReport>> {
    if trajectories.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n_steps = trajectories[0].q.len() - 1;
    (0..=n_steps)
        .map(|step| {
            let samples: Vec<f64> = trajectories.iter().map(|t| t.q[step]).collect();
            let hist = histogram(&samples, bins)?;
            let marginal = classical_marginal(&cfg.flow, &cfg.initial, &cfg.kraus, step);
            let law = bin_density(|q| marginal.density(q), bins)?;
            Ok(MarginalReport {
                step,
                tv_vs_classical: tv_distance(&hist, &law)?,
                noise_tv: expected_noise_tv(&law, samples.len()),
                histogram: hist,
                classical: law,
                trials: samples.len(),
            })
        })
        .collect()
}

/// Trajectories plus their per-step reports.
#[derive(Debug, Clone)]
pub struct MarginalRun {
    pub trajectories: Vec<Trajectory>,
    pub reports: Vec<MarginalReport>,
}

pub fn run_marginal_experiment(exp: &Experiment, bins: usize) -> Result<MarginalRun> {
    let trajectories = sample_batch(exp)?;
    let reports = marginal_reports(exp.config(), &trajectories, bins)?;
    Ok(MarginalRun { trajectories, reports })
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub n_values: Vec<usize>,
    /// `tv[i][step]` for `n_values[i]`.
    pub tv: Vec<Vec<f64>>,
    pub noise_tv: Vec<Vec<f64>>,
    pub gamma: f64,
    pub ehrenfest: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// The base experiment rerun on every grid size, all with the base seed.
pub fn sweep_n_experiment(base: &ExperimentConfig, n_values: &[usize], bins: usize) -> Result<ConvergenceReport> {
    if n_values.is_empty() {
        return Err(Error::param("N list is empty"));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("N list must be strictly ascending"));
    }
    let gamma = base.flow.lyapunov();
    let mut tv = Vec::new();
    let mut noise_tv = Vec::new();
    let mut ehrenfest = Vec::new();
    for &n in n_values {
        let mut cfg = base.clone();
        cfg.grid = GridSize::new(n)?;
        let run = run_marginal_experiment(&Experiment::new(cfg)?, bins)?;
        tv.push(run.reports.iter().map(|r| r.tv_vs_classical).collect());
        noise_tv.push(run.reports.iter().map(|r| r.noise_tv).collect());
        ehrenfest.push(ehrenfest_time(GridSize::new(n)?, gamma));
    }
    Ok(ConvergenceReport { n_values: n_values.to_vec(), tv, noise_tv, gamma, ehrenfest, trials: base.trials, seed: base.seed })
}

/// First step with TV above `threshold`; `n_steps + 1` (censored) if none.
pub fn breakdown_step(reports: &[MarginalReport], threshold: f64) -> Breakdown {
    match reports.iter().find(|r| r.tv_vs_classical > threshold) {
        Some(r) => Breakdown { step: r.step, censored: false },
        None => Breakdown { step: reports.len(), censored: true },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Breakdown {
    pub step: usize,
    /// No step crossed the threshold within the horizon.
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct LyapunovEntry {
    pub matrix: SymplecticMatrix,
    pub gamma: f64,
    pub ehrenfest: f64,
    pub reports: Vec<MarginalReport>,
    pub breakdown: Breakdown,
}

/// The base experiment under each matrix in turn, same grid, trials and seed.
pub fn lyapunov_comparison(matrices: &[SymplecticMatrix], base: &ExperimentConfig, bins: usize) -> Result<Vec<LyapunovEntry>> {
    base.grid.require_even()?;
    matrices
        .iter()
        .map(|m| {
            let mut cfg = base.clone();
            cfg.flow = FlowDescriptor::linear(*m);
            let gamma = cfg.flow.lyapunov();
            let run = run_marginal_experiment(&Experiment::new(cfg)?, bins)?;
            Ok(LyapunovEntry {
                matrix: *m,
                gamma,
                ehrenfest: ehrenfest_time(base.grid, gamma),
                breakdown: breakdown_step(&run.reports, BREAKDOWN_TV),
                reports: run.reports,
            })
        })
        .collect()
}

/// Joint histogram of `(q_0, …, q_n)` on `bins^{n+1}` cells, as densities,
/// with `q_0` the slowest index.
pub fn joint_histogram(trajectories: &[Trajectory], bins: usize) -> Result<Vec<f64>> {
    let first = trajectories.first().ok_or(Error::EmptySamples)?;
    let dims = first.q.len() as u32;
    let cells = bins.pow(dims);
    let weight = cells as f64 / trajectories.len() as f64;
    let mut out = vec![0.0; cells];
    for t in trajectories {
        let flat = t.q.iter().fold(0, |acc, &q| acc * bins + bin_index(q, bins));
        out[flat] += weight;
    }
    Ok(out)
}

/// Cell averages of an oracle table on `bins^{n+1}` cells. `Q` must be a
/// multiple of `bins`.
pub fn bin_density_table(table: &DensityTable, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || !table.q_count.is_multiple_of(bins) {
        return Err(Error::param(format!("Q = {} is not a multiple of {bins} bins", table.q_count)));
    }
    let sub = table.q_count / bins;
    let dims = table.n_steps + 1;
    let mut out = vec![0.0; bins.pow(dims as u32)];
    for (flat, v) in table.values.iter().enumerate() {
        let mut rest = flat;
        let mut cell = 0;
        let mut stride = 1;
        for _ in 0..dims {
            cell += (rest % table.q_count) / sub * stride;
            rest /= table.q_count;
            stride *= bins;
        }
        out[cell] += v;
    }
    let per_cell = sub.pow(dims as u32) as f64;
    out.iter_mut().for_each(|v| *v /= per_cell);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub table: DensityTable,
    pub tv: f64,
    pub noise_tv: f64,
    pub cells: usize,
    pub trials: usize,
}

/// Monte Carlo joint law of the experiment against the exact density.
pub fn oracle_comparison(exp: &Experiment, q_count: usize, bins: usize) -> Result<OracleComparison> {
    let cfg = exp.config();
    let table = exact_quantum_density(exp.initial_state(), &cfg.kraus, exp.propagator(), cfg.n_steps, q_count)?;
    let exact = BinnedDensity::from_densities(bin_density_table(&table, bins)?)?;
    let trajectories = sample_batch(exp)?;
    let empirical = BinnedDensity::from_densities(joint_histogram(&trajectories, bins)?)?;
    Ok(OracleComparison {
        tv: tv_distance(&empirical, &exact)?,
        noise_tv: expected_noise_tv(&exact, trajectories.len()),
        cells: exact.bins(),
        trials: trajectories.len(),
        table,
    })
}

#[derive(Debug, Clone)]
pub struct GrowthProbe {
    /// `sup |∇(a ∘ φⁿ)|` over the probe grid, `n = 0, …, max_n`.
    pub sup_gradient: Vec<f64>,
    /// Least-squares slope of `log sup_gradient` against `n`.
    pub slope: f64,
}

/// Sup of the first derivatives of `a ∘ φⁿ` on a 16×16 grid by central
/// differences.
pub fn derivative_growth_probe(a: &Symbol, flow: &FlowDescriptor, max_n: usize) -> GrowthProbe {
    let h = PROBE_STEP;
    let eval = |z: [f64; 2], n: usize| {
        let w = flow.iterate(z, n);
        a.eval_real(w[0], w[1])
    };
    let sup_gradient: Vec<f64> = (0..=max_n)
        .map(|n| {
            let mut sup: f64 = 0.0;
            for i in 0..PROBE_SIDE {
                for j in 0..PROBE_SIDE {
                    let z = [(i as f64 + 0.5) / PROBE_SIDE as f64, (j as f64 + 0.5) / PROBE_SIDE as f64];
                    let dx = (eval([z[0] + h, z[1]], n) - eval([z[0] - h, z[1]], n)) / (2.0 * h);
                    let dxi = (eval([z[0], z[1] + h], n) - eval([z[0], z[1] - h], n)) / (2.0 * h);
                    sup = sup.max(dx.hypot(dxi));
                }
            }
            sup
        })
        .collect();
    let logs: Vec<f64> = sup_gradient.iter().map(|s| s.max(f64::MIN_POSITIVE).ln()).collect();
    GrowthProbe { slope: fit_slope(&logs), sup_gradient }
}

/// Largest step count (at most `cap`) for which the centered difference still
/// resolves a gradient growing like `e^{Γn}`: `e^{Γn}·PROBE_STEP ≤ 10⁻²`.
pub fn probe_horizon(gamma: f64, cap: usize) -> usize {
    if gamma <= 0.0 {
        return cap;
    }
    let n = ((1e-2 / PROBE_STEP).ln() / gamma).floor() as usize;
    n.clamp(2, cap)
}

/// Least-squares slope of `y` against `0, 1, …`.
pub fn fit_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (num, den) = y.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, v)| {
        let dx = i as f64 - mx;
        (a + dx * (v - my), b + dx * dx)
    });
    num / den
}
