//! Measured quantum trajectories, the exact joint law used as an oracle,
//! and the classical trajectory law they approach.
//!
//! One trial alternates a position measurement with a unitary step:
//! draw `k` with probability `|v_k|²`, set `q = k/N + g mod 1` with
//! `g ~ Normal(0, σ²)`, then `v ← U diag(f(x_k − q)) v / ‖·‖`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::propagators::{hamiltonian_propagator, quantize_cat, quantize_symplectic, FlowDescriptor, FlowKind, Propagator, SymplecticMatrix, Workspace};
use crate::rng::trial_rng;
use crate::states::{beta0_state, coherent_state, l2_norm, CoherentSpec, KrausFamily, PeriodicProfile, StateVector};
use crate::torus_ops::GridSize;
use crate::{Error, Result};

/// Pre-normalization norm below which an update is reported as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-30;

/// The initial state of every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Coherent(CoherentSpec),
    /// Momentum-localized state `Σ_k N^{−1/2} g(k/N) e^{2πikξ₀} Q_k`.
    Beta0 { profile: PeriodicProfile, xi0: f64 },
}

impl InitialState {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialState::Coherent(spec) => spec.validate(),
            InitialState::Beta0 { profile, xi0 } => {
                if !xi0.is_finite() {
                    return Err(Error::param("xi0 must be finite"));
                }
                profile.validate()
            }
        }
    }

    pub fn build(&self, grid: GridSize) -> Result<StateVector> {
        self.validate()?;
        match self {
            InitialState::Coherent(spec) => coherent_state(spec, grid),
            InitialState::Beta0 { profile, xi0 } => beta0_state(|x| c64::new(profile.amplitude(x), 0.0), *xi0, grid),
        }
    }
}

/// Everything that determines a batch of trajectories.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: GridSize,
    pub initial: InitialState,
    pub kraus: KrausFamily,
    pub flow: FlowDescriptor,
    pub n_steps: usize,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::param("n_steps must be at least 1"));
        }
        if self.trials < 1 {
            return Err(Error::param("trials must be at least 1"));
        }
        self.initial.validate()
    }
}

/// The quantum propagator for a flow: the fast cat-map kernel, a generator
/// word for other integer matrices, or a dense Hamiltonian exponential.
pub fn build_propagator(flow: &FlowDescriptor, grid: GridSize) -> Result<Propagator> {
    match flow.kind() {
        FlowKind::Linear(m) if *m == SymplecticMatrix::cat() => quantize_cat(grid),
        FlowKind::Linear(m) => quantize_symplectic(m, grid),
        FlowKind::Hamiltonian { symbol, t_step } => hamiltonian_propagator(symbol, grid, *t_step),
    }
}

/// A validated configuration with its propagator and initial state built.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    propagator: Propagator,
    psi0: StateVector,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let propagator = build_propagator(&config.flow, config.grid)?;
        Self::with_propagator(config, propagator)
    }

    /// Uses a prebuilt propagator, which must live on the configured grid.
    pub fn with_propagator(config: ExperimentConfig, propagator: Propagator) -> Result<Self> {
        config.validate()?;
        config.grid.check_same(propagator.grid())?;
        let psi0 = config.initial.build(config.grid)?;
        Ok(Experiment { config, propagator, psi0 })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.psi0
    }

    /// Same experiment with a different step count, trial count and seed.
    pub fn rescheduled(&self, n_steps: usize, trials: usize, seed: u64) -> Result<Self> {
        let mut config = self.config.clone();
        config.n_steps = n_steps;
        config.trials = trials;
        config.seed = seed;
        config.validate()?;
        Ok(Experiment { config, propagator: self.propagator.clone(), psi0: self.psi0.clone() })
    }
}

/// The measured positions `q_0, …, q_n` of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub q: Vec<f64>,
    /// Stream index of the trial under the run seed.
    pub trial_seed: u64,
}

/// Draws one measurement outcome from a unit state.
pub fn sample_position<R: Rng + ?Sized>(v: &[c64], fam: &KrausFamily, rng: &mut R) -> f64 {
    let n = v.len();
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    for a in v {
        total += a.norm_sqr();
        cumulative.push(total);
    }
    let u = rng.random::<f64>() * total;
    let k = cumulative.partition_point(|&c| c <= u).min(n - 1);
    let x = k as f64 / n as f64;
    (x + fam.sample_offset(rng)).rem_euclid(1.0)
}

/// `v ← U diag(f(x_k − q)) v / ‖·‖`, in place.
pub fn measurement_update_in_place(v: &mut [c64], q: f64, fam: &KrausFamily, u: &Propagator, ws: &mut Workspace) -> Result<()> {
    let n = v.len();
    for (k, a) in v.iter_mut().enumerate() {
        *a *= fam.f(k as f64 / n as f64 - q);
    }
    let norm = l2_norm(v);
    if norm.is_nan() || norm < DEGENERATE_NORM {
        return Err(Error::DegenerateState(norm));
    }
    u.apply(v, ws);
    // U is unitary, so the norm is unchanged by the step
    v.iter_mut().for_each(|a| *a /= norm);
    Ok(())
}

pub fn measurement_update(v: &StateVector, q: f64, fam: &KrausFamily, u: &Propagator) -> Result<StateVector> {
    v.grid().check_same(u.grid())?;
    let mut amps = v.amplitudes().to_vec();
    measurement_update_in_place(&mut amps, q, fam, u, &mut Workspace::new())?;
    StateVector::normalized(v.grid(), amps)
}

/// One trial of the experiment, reproducible from `(seed, trial)`.
pub fn sample_trajectory(exp: &Experiment, trial: u64) -> Result<Trajectory> {
    let mut ws = Workspace::new();
    sample_trajectory_with(exp, trial, &mut ws)
}

fn sample_trajectory_with(exp: &Experiment, trial: u64, ws: &mut Workspace) -> Result<Trajectory> {
    let cfg = exp.config();
    let mut rng = trial_rng(cfg.seed, trial);
    let mut v = exp.psi0.amplitudes().to_vec();
    let mut q = Vec::with_capacity(cfg.n_steps + 1);
    for step in 0..=cfg.n_steps {
        let qi = sample_position(&v, &cfg.kraus, &mut rng);
        q.push(qi);
        if step < cfg.n_steps {
            measurement_update_in_place(&mut v, qi, &cfg.kraus, &exp.propagator, ws)?;
        }
    }
    Ok(Trajectory { q, trial_seed: trial })
}

/// All trials, in trial order, sampled in parallel.
pub fn sample_batch(exp: &Experiment) -> Result<Vec<Trajectory>> {
    (0..exp.config().trials as u64)
        .into_par_iter()
        .map_init(Workspace::new, |ws, trial| sample_trajectory_with(exp, trial, ws))
        .collect()
}

/// Largest grid, horizon and resolution accepted by [`exact_quantum_density`].
pub const ORACLE_MAX_N: usize = 64;
pub const ORACLE_MAX_STEPS: usize = 2;
pub const ORACLE_MAX_Q: usize = 128;

/// The joint density of `(q_0, …, q_n)` on the grid `q_i = (i + ½)/Q` in
/// every coordinate, stored with `q_0` as the slowest index.
#[derive(Debug, Clone)]
pub struct DensityTable {
    pub q_count: usize,
    pub n_steps: usize,
    pub values: Vec<f64>,
}

impl DensityTable {
    pub fn point(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.q_count as f64
    }

    /// Riemann sum of the table; 1 up to quadrature error.
    pub fn riemann_sum(&self) -> f64 {
        let cell = (self.q_count as f64).powi(self.n_steps as i32 + 1);
        self.values.iter().sum::<f64>() / cell
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.q_count + i);
        self.values[flat]
    }
}

/// `tr(Φ*_{q_n} ∘ ⋯ ∘ Φ*_{q_0} ρ)` for a pure initial state, by direct
/// contraction: `‖A_{q_n} U ⋯ U A_{q_0} ψ‖²` with `A_q = diag(f(x_k − q))`.
pub fn exact_quantum_density(psi: &StateVector, fam: &KrausFamily, u: &Propagator, n_steps: usize, q_count: usize) -> Result<DensityTable> {
    let grid = psi.grid();
    grid.check_same(u.grid())?;
    if grid.n() > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge(format!("N = {} exceeds {ORACLE_MAX_N}", grid.n())));
    }
    if n_steps > ORACLE_MAX_STEPS {
        return Err(Error::OracleTooLarge(format!("n = {n_steps} exceeds {ORACLE_MAX_STEPS}")));
    }
    if q_count > ORACLE_MAX_Q || q_count == 0 {
        return Err(Error::OracleTooLarge(format!("Q = {q_count} outside 1..={ORACLE_MAX_Q}")));
    }
    let kraus: Vec<Vec<f64>> = (0..q_count).map(|i| fam.kraus_diagonal((i as f64 + 0.5) / q_count as f64, grid)).collect();
    let mut ws = Workspace::new();
    // unnormalized branch states after each measured prefix
    let mut level: Vec<Vec<c64>> = vec![psi.amplitudes().to_vec()];
    for _ in 0..n_steps {
        let mut next = Vec::with_capacity(level.len() * q_count);
        for v in &level {
            for a in &kraus {
                let mut w: Vec<c64> = v.iter().zip(a).map(|(x, f)| x * f).collect();
                u.apply(&mut w, &mut ws);
                next.push(w);
            }
        }
        level = next;
    }
    let mut values = Vec::with_capacity(level.len() * q_count);
    for v in &level {
        for a in &kraus {
            values.push(v.iter().zip(a).map(|(x, f)| x.norm_sqr() * f * f).sum());
        }
    }
    debug_assert_eq!(values.len(), q_count.pow(n_steps as u32 + 1));
    Ok(DensityTable { q_count, n_steps, values })
}

/// Quadrature nodes over `x` for momentum-localized initial measures.
pub const CLASSICAL_NODES: usize = 1024;

/// Law of `q_k` under the classical process: a wrapped Gaussian around the
/// flowed position, averaged over the initial measure.
#[derive(Debug, Clone)]
pub struct ClassicalMarginal {
    kraus: KrausFamily,
    /// `(flowed position, weight)` pairs, weights summing to 1.
    centers: Vec<(f64, f64)>,
}

impl ClassicalMarginal {
    pub fn density(&self, q: f64) -> f64 {
        self.centers.iter().map(|&(c, w)| w * self.kraus.density(c - q)).sum()
    }

    /// The flowed position for a point-mass initial measure.
    pub fn center(&self) -> Option<f64> {
        match self.centers.as_slice() {
            [(c, _)] => Some(*c),
            _ => None,
        }
    }
}

fn initial_points(initial: &InitialState) -> Vec<([f64; 2], f64)> {
    match initial {
        InitialState::Coherent(spec) => vec![(spec.center(), 1.0)],
        InitialState::Beta0 { profile, xi0 } => {
            let m = CLASSICAL_NODES;
            let pts: Vec<([f64; 2], f64)> = (0..m)
                .map(|i| {
                    let x = (i as f64 + 0.5) / m as f64;
                    ([x, xi0.rem_euclid(1.0)], profile.density(x))
                })
                .collect();
            let total: f64 = pts.iter().map(|p| p.1).sum();
            pts.into_iter().map(|(z, w)| (z, w / total)).collect()
        }
    }
}

/// Marginal law of `q_k` under the classical trajectory measure.
pub fn classical_marginal(flow: &FlowDescriptor, initial: &InitialState, fam: &KrausFamily, k: usize) -> ClassicalMarginal {
    let centers = initial_points(initial).into_iter().map(|(z, w)| (flow.iterate(z, k)[0], w)).collect();
    ClassicalMarginal { kraus: fam.clone(), centers }
}

/// One path of the classical process: draw `ζ` from the initial measure,
/// then `q_k = position(φ^k ζ) + g_k mod 1` with independent `g_k`.
pub fn sample_classical_trajectory(flow: &FlowDescriptor, initial: &InitialState, fam: &KrausFamily, n_steps: usize, seed: u64, trial: u64) -> Trajectory {
    let mut rng = trial_rng(seed, trial);
    let mut z = match initial {
        InitialState::Coherent(spec) => spec.center(),
        InitialState::Beta0 { profile, xi0 } => [profile.sample(&mut rng), xi0.rem_euclid(1.0)],
    };
    let mut q = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        q.push((z[0] + fam.sample_offset(&mut rng)).rem_euclid(1.0));
        if step < n_steps {
            z = flow.step(z);
        }
    }
    Trajectory { q, trial_seed: trial }
}

pub fn sample_classical_batch(flow: &FlowDescriptor, initial: &InitialState, fam: &KrausFamily, n_steps: usize, trials: usize, seed: u64) -> Vec<Trajectory> {
    (0..trials as u64).into_par_iter().map(|t| sample_classical_trajectory(flow, initial, fam, n_steps, seed, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagators::SymplecticMatrix;

    fn grid(n: usize) -> GridSize {
        GridSize::new(n).unwrap()
    }

    fn coherent(x0: f64, p0: f64) -> InitialState {
        InitialState::Coherent(CoherentSpec::new(x0, p0, 0.5, 0.1).unwrap())
    }

    fn identity_propagator(g: GridSize) -> Propagator {
        quantize_symplectic(&SymplecticMatrix::identity(), g).unwrap()
    }

    #[test]
    fn basis_state_narrow_noise() {
        let fam = KrausFamily::wrapped_gaussian(1e-3).unwrap();
        let g = grid(20);
        let v = StateVector::basis(g, 7).unwrap();
        let mut rng = trial_rng(1, 0);
        let hits = (0..2000)
            .filter(|_| {
                let d = (sample_position(v.amplitudes(), &fam, &mut rng) - 0.35).abs();
                d.min(1.0 - d) <= 3e-3
            })
            .count();
        assert!(hits as f64 / 2000.0 > 0.95);
    }

    #[test]
    fn update_with_flat_kraus_and_identity_is_noop() {
        let g = grid(16);
        let fam = KrausFamily::wrapped_gaussian(5.0).unwrap();
        let v = coherent_state(&CoherentSpec::new(0.3, 0.2, 0.5, 0.1).unwrap(), g).unwrap();
        let w = measurement_update(&v, 0.77, &fam, &identity_propagator(g)).unwrap();
        assert!(v.amplitudes().iter().zip(w.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-10));
        assert!((w.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_measurement_localizes() {
        let g = grid(64);
        let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
        let u = identity_propagator(g);
        let mut v = StateVector::uniform(g);
        let q = 0.5;
        let variance = |v: &StateVector| {
            v.probabilities().iter().enumerate().map(|(k, p)| p * (k as f64 / 64.0 - q).powi(2)).sum::<f64>()
        };
        let mut last = variance(&v);
        for _ in 0..10 {
            v = measurement_update(&v, q, &fam, &u).unwrap();
            let now = variance(&v);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let cfg = ExperimentConfig {
            grid: grid(32),
            initial: coherent(0.1, 0.1),
            kraus: KrausFamily::wrapped_gaussian(0.1).unwrap(),
            flow: FlowDescriptor::linear(SymplecticMatrix::cat()),
            n_steps: 4,
            trials: 8,
            seed: 99,
        };
        let exp = Experiment::new(cfg).unwrap();
        let a = sample_batch(&exp).unwrap();
        let b = sample_batch(&exp).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3], sample_trajectory(&exp, 3).unwrap());
        assert!(a.iter().all(|t| t.q.len() == 5 && t.q.iter().all(|q| (0.0..1.0).contains(q))));
        assert_ne!(a[0].q, a[1].q);
    }

    #[test]
    fn oracle_single_step_formula() {
        let g = grid(8);
        let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
        let psi = coherent_state(&CoherentSpec::new(0.4, 0.3, 0.5, 0.2).unwrap(), g).unwrap();
        let u = quantize_cat(g).unwrap();
        let table = exact_quantum_density(&psi, &fam, &u, 0, 64).unwrap();
        let probs = psi.probabilities();
        for i in 0..64 {
            let q = table.point(i);
            let want: f64 = (0..8).map(|k| fam.density(k as f64 / 8.0 - q) * probs[k]).sum();
            assert!((table.values[i] - want).abs() < 1e-12);
        }
        assert!((table.riemann_sum() - 1.0).abs() < 1e-4);
        let two = exact_quantum_density(&psi, &fam, &u, 2, 24).unwrap();
        assert!((two.riemann_sum() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn oracle_caps() {
        let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
        let g = grid(66);
        let psi = StateVector::uniform(g);
        let u = identity_propagator(g);
        assert!(matches!(exact_quantum_density(&psi, &fam, &u, 0, 8), Err(Error::OracleTooLarge(_))));
        let g = grid(8);
        let psi = StateVector::uniform(g);
        let u = identity_propagator(g);
        assert!(exact_quantum_density(&psi, &fam, &u, 3, 8).is_err());
        assert!(exact_quantum_density(&psi, &fam, &u, 1, 129).is_err());
    }

    #[test]
    fn classical_marginal_centers() {
        let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
        let init = coherent(0.1, 0.1);
        let cat = FlowDescriptor::linear(SymplecticMatrix::cat());
        assert!((classical_marginal(&cat, &init, &fam, 0).center().unwrap() - 0.1).abs() < 1e-15);
        assert!((classical_marginal(&cat, &init, &fam, 1).center().unwrap() - 0.3).abs() < 1e-15);
        let e = FlowDescriptor::linear(SymplecticMatrix::elliptic());
        let init = coherent(0.23, 0.71);
        let m0 = classical_marginal(&e, &init, &fam, 0);
        let m3 = classical_marginal(&e, &init, &fam, 3);
        for i in 0..20 {
            let q = i as f64 / 20.0;
            assert!((m0.density(q) - m3.density(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn beta0_classical_marginal_integrates_to_one() {
        let fam = KrausFamily::wrapped_gaussian(0.1).unwrap();
        let init = InitialState::Beta0 { profile: PeriodicProfile::WrappedGaussian { center: 0.3, width: 0.1 }, xi0: 0.2 };
        let cat = FlowDescriptor::linear(SymplecticMatrix::cat());
        let m = classical_marginal(&cat, &init, &fam, 2);
        let total: f64 = (0..400).map(|i| m.density((i as f64 + 0.5) / 400.0)).sum::<f64>() / 400.0;
        assert!((total - 1.0).abs() < 1e-9);
    }
}
