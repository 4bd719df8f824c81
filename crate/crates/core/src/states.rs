//! Initial states and the wrapped-Gaussian measurement family.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::torus_ops::{GridSize, Symbol, TorusOperator};
use crate::{Error, Result};

/// Tolerance on `‖ψ‖ = 1` for every [`StateVector`].
pub const NORM_TOL: f64 = 1e-12;

/// Lattice and wrap sums stop once terms fall below this.
pub const SUM_CUTOFF: f64 = 1e-16;

/// Number of periods beyond `[0, 1)` that a lattice sum always visits.
const MIN_WRAPS: i64 = 2;
const MAX_WRAPS: i64 = 100_000;

/// Parameters of the momentum-kicked Gaussian state
/// `Π_N(exp(−((x − x₀)N^β)²/(2σ′²) + 2πiNx p₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentSpec {
    pub x0: f64,
    pub p0: f64,
    pub beta: f64,
    pub sigma_prime: f64,
}

impl CoherentSpec {
    pub fn new(x0: f64, p0: f64, beta: f64, sigma_prime: f64) -> Result<Self> {
        let spec = CoherentSpec { x0, p0, beta, sigma_prime };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.sigma_prime > 0.0 && self.sigma_prime.is_finite()) {
            return Err(Error::param(format!("sigma_prime must be positive, got {}", self.sigma_prime)));
        }
        if !(self.x0.is_finite() && self.p0.is_finite()) {
            return Err(Error::param("x0 and p0 must be finite"));
        }
        Ok(())
    }

    /// The phase-space point the state concentrates on, reduced mod 1.
    pub fn center(&self) -> [f64; 2] {
        [self.x0.rem_euclid(1.0), self.p0.rem_euclid(1.0)]
    }

    /// Width `σ′ N^{−β}` of the position envelope.
    pub fn envelope_width(&self, grid: GridSize) -> f64 {
        self.sigma_prime * (grid.n() as f64).powf(-self.beta)
    }
}

/// A unit vector of `H_N` in the position basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: GridSize,
    amplitudes: Vec<c64>,
}

impl StateVector {
    /// Normalizes `amplitudes`. Fails on a length mismatch or a vanishing
    /// norm.
    pub fn normalized(grid: GridSize, mut amplitudes: Vec<c64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::GridMismatch { expected: grid.n(), found: amplitudes.len() });
        }
        let norm = l2_norm(&amplitudes);
        if !(norm.is_finite() && norm > 1e-300) {
            return Err(Error::DegenerateState(norm));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(StateVector { grid, amplitudes })
    }

    /// Wraps amplitudes that are already unit norm to [`NORM_TOL`].
    pub fn from_unit(grid: GridSize, amplitudes: Vec<c64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::GridMismatch { expected: grid.n(), found: amplitudes.len() });
        }
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::param(format!("state norm {norm} differs from 1")));
        }
        Ok(StateVector { grid, amplitudes })
    }

    pub fn basis(grid: GridSize, k: usize) -> Result<Self> {
        if k >= grid.n() {
            return Err(Error::param(format!("basis index {k} out of range for N = {}", grid.n())));
        }
        let mut amplitudes = vec![c64::new(0.0, 0.0); grid.n()];
        amplitudes[k] = c64::new(1.0, 0.0);
        Ok(StateVector { grid, amplitudes })
    }

    /// `N^{−1/2}(1, …, 1)`.
    pub fn uniform(grid: GridSize) -> Self {
        let a = c64::new(1.0 / (grid.n() as f64).sqrt(), 0.0);
        StateVector { grid, amplitudes: vec![a; grid.n()] }
    }

    pub fn grid(&self) -> GridSize {
        self.grid
    }

    pub fn amplitudes(&self) -> &[c64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<c64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amplitudes)
    }

    /// `|ψ_k|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

pub(crate) fn l2_norm(v: &[c64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `(Π_N u)_n = N^{−1/2} Σ_k u(k + n/N)`, unnormalized.
///
/// For each `n` the lattice sum visits `|k| ≤ 2` and then continues outward
/// until a term drops below `10⁻¹⁶`, so `u` should be concentrated within a
/// few periods of `[0, 1)`.
pub fn project_pi_n<G>(g: G, grid: GridSize) -> Vec<c64>
where
    G: Fn(f64) -> c64,
{
    let n = grid.n();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|j| {
            let x = j as f64 / n as f64;
            let mut sum = g(x);
            for dir in [-1i64, 1] {
                let mut k = dir;
                loop {
                    let term = g(x + k as f64);
                    sum += term;
                    if (k.abs() >= MIN_WRAPS && term.norm() < SUM_CUTOFF) || k.abs() >= MAX_WRAPS {
                        break;
                    }
                    k += dir;
                }
            }
            sum * scale
        })
        .collect()
}

/// Coherent-state amplitudes before normalization.
pub fn coherent_amplitudes(spec: &CoherentSpec, grid: GridSize) -> Vec<c64> {
    let nf = grid.n() as f64;
    let scale = nf.powf(spec.beta);
    let prefactor = nf.powf(spec.beta / 2.0) / (spec.sigma_prime * (2.0 * PI).sqrt());
    let (x0, p0, s) = (spec.x0, spec.p0, spec.sigma_prime);
    project_pi_n(
        |x| {
            let u = (x - x0) * scale;
            let envelope = (-(u * u) / (2.0 * s * s)).exp();
            if envelope == 0.0 {
                return c64::new(0.0, 0.0);
            }
            // reduce N x p₀ before forming the phase to keep it accurate
            let phase = (nf * x * p0).rem_euclid(1.0);
            c64::from_polar(prefactor * envelope, 2.0 * PI * phase)
        },
        grid,
    )
}

/// The normalized coherent state concentrating at `(x₀, p₀)`.
pub fn coherent_state(spec: &CoherentSpec, grid: GridSize) -> Result<StateVector> {
    spec.validate()?;
    StateVector::normalized(grid, coherent_amplitudes(spec, grid))
}

/// `Σ_k N^{−1/2} g(k/N) e^{2πikξ₀} Q_k`, unnormalized. Its norm is the
/// normalization constant `C_N`.
pub fn beta0_amplitudes<G>(g: G, xi0: f64, grid: GridSize) -> Vec<c64>
where
    G: Fn(f64) -> c64,
{
    let n = grid.n();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let phase = (k as f64 * xi0).rem_euclid(1.0);
            g(k as f64 / n as f64) * c64::cis(2.0 * PI * phase) * scale
        })
        .collect()
}

/// Momentum-localized state with position profile `g`, normalized.
pub fn beta0_state<G>(g: G, xi0: f64, grid: GridSize) -> Result<StateVector>
where
    G: Fn(f64) -> c64,
{
    StateVector::normalized(grid, beta0_amplitudes(g, xi0, grid))
}

/// An `L²`-normalized position profile on `T¹` for momentum-localized
/// states, with exact sampling from `|g|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeriodicProfile {
    /// `g ≡ 1`.
    Uniform,
    /// `|g|²` is the wrapped normal density with the given center and width.
    WrappedGaussian { center: f64, width: f64 },
}

impl PeriodicProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PeriodicProfile::Uniform => Ok(()),
            PeriodicProfile::WrappedGaussian { center, width } => {
                if !(width > 0.0 && width.is_finite()) || !center.is_finite() {
                    return Err(Error::param("profile width must be positive and center finite"));
                }
                Ok(())
            }
        }
    }

    /// `|g(x)|²`.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            PeriodicProfile::Uniform => 1.0,
            PeriodicProfile::WrappedGaussian { center, width } => wrapped_normal_pdf(x - center, width),
        }
    }

    pub fn amplitude(&self, x: f64) -> f64 {
        self.density(x).sqrt()
    }

    /// Draw `x ~ |g|² dx`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PeriodicProfile::Uniform => rng.random::<f64>(),
            PeriodicProfile::WrappedGaussian { center, width } => {
                let g: f64 = Normal::new(0.0, width).expect("validated width").sample(rng);
                (center + g).rem_euclid(1.0)
            }
        }
    }
}

/// `Σ_k exp(−(u − k)²/(2σ²))` over the integers `k` with non-negligible terms.
fn wrap_sum(u: f64, sigma: f64) -> f64 {
    let u = u.rem_euclid(1.0);
    let reach = sigma * (2.0 * (1.0 / SUM_CUTOFF).ln()).sqrt();
    let lo = (u - reach).floor() as i64;
    let hi = (u + reach).ceil() as i64;
    (lo..=hi)
        .map(|k| {
            let d = u - k as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .sum()
}

/// Density of a wrapped normal of standard deviation `σ` on `T¹`.
pub fn wrapped_normal_pdf(u: f64, sigma: f64) -> f64 {
    wrap_sum(u, sigma) / (sigma * (2.0 * PI).sqrt())
}

/// Quadrature points used for the normalization constant of `f`.
pub const NORMALIZATION_POINTS: usize = 2048;

/// Fourier tail (ℓ¹) tolerated when truncating the table of `f`.
pub const COEFF_TAIL: f64 = 1e-14;

/// The Kraus family `f_q(x) = f(x − q)`, `q ∈ T¹`, with
/// `f(x) = c (Σ_k exp(−(x − k)²/(2σ²)))^{1/2}` and `∫ f² = 1`.
#[derive(Debug, Clone)]
pub struct KrausFamily {
    sigma: f64,
    c: f64,
    f_coeffs: Symbol,
}

impl KrausFamily {
    pub fn wrapped_gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("measurement width sigma must be positive, got {sigma}")));
        }
        let m = NORMALIZATION_POINTS;
        let integral = (0..m).map(|i| wrap_sum((i as f64 + 0.5) / m as f64, sigma)).sum::<f64>() / m as f64;
        let c = 1.0 / integral.sqrt();
        let mut fam = KrausFamily { sigma, c, f_coeffs: Symbol::zero() };
        fam.f_coeffs = fam.fourier_table();
        Ok(fam)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The normalization constant `c`.
    pub fn normalization(&self) -> f64 {
        self.c
    }

    /// `f(x)`, strictly positive and 1-periodic.
    pub fn f(&self, x: f64) -> f64 {
        self.c * wrap_sum(x, self.sigma).sqrt()
    }

    /// `f(u)²`, a probability density in `u`.
    pub fn density(&self, u: f64) -> f64 {
        let f = self.f(u);
        f * f
    }

    /// Fourier table of `f` as a position-only symbol, truncated so the
    /// dropped coefficients sum to less than `10⁻¹⁴`.
    pub fn f_coeffs(&self) -> &Symbol {
        &self.f_coeffs
    }

    fn fourier_table(&self) -> Symbol {
        // f is analytic only in a strip of half-width πσ² (the wrap sum has
        // complex zeros there), so coefficients decay like e^{−2π²σ²|k|}
        let m = ((8.0 / (self.sigma * self.sigma)).ceil() as usize).clamp(256, 1 << 20).next_power_of_two();
        let mut buf: Vec<c64> = (0..m).map(|i| c64::new(self.f(i as f64 / m as f64), 0.0)).collect();
        FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
        let coeff = |k: i64| buf[k.rem_euclid(m as i64) as usize] / m as f64;
        let half = m as i64 / 2 - 1;
        // coefficients at round-off level are not part of the tail
        let noise = 1e-15 * coeff(0).norm();
        let mut tail: f64 = 0.0;
        let mut order = half;
        while order > 0 {
            let drop: f64 = [coeff(order).norm(), coeff(-order).norm()].iter().filter(|v| **v > noise).sum();
            if tail + drop >= COEFF_TAIL {
                break;
            }
            tail += drop;
            order -= 1;
        }
        Symbol::from_coeffs((-order..=order).map(|k| {
            let v = coeff(k);
            ((k, 0), c64::new(v.re, 0.0))
        }))
    }

    /// `f(x_k − q)` for `k = 0, …, N − 1`.
    pub fn kraus_diagonal(&self, q: f64, grid: GridSize) -> Vec<f64> {
        (0..grid.n()).map(|k| self.f(grid.position(k) - q)).collect()
    }

    /// `Op_N(f_q) = diag(f(x_k − q))`.
    pub fn kraus_operator(&self, q: f64, grid: GridSize) -> TorusOperator {
        let diag: Vec<c64> = self.kraus_diagonal(q, grid).into_iter().map(|v| c64::new(v, 0.0)).collect();
        TorusOperator::diagonal(grid, &diag).expect("diagonal has grid length")
    }

    /// Draw from the density `f(u)²`.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = Normal::new(0.0, self.sigma).expect("validated sigma").sample(rng);
        g.rem_euclid(1.0)
    }
}

/// Free-function form of [`KrausFamily::wrapped_gaussian`].
pub fn wrapped_gaussian(sigma: f64) -> Result<KrausFamily> {
    KrausFamily::wrapped_gaussian(sigma)
}

/// Free-function form of [`KrausFamily::kraus_operator`].
pub fn kraus_operator(fam: &KrausFamily, q: f64, grid: GridSize) -> TorusOperator {
    fam.kraus_operator(q, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_ops::{quantize_aliased, trace_pairing, DensityState};

    fn grid(n: usize) -> GridSize {
        GridSize::new(n).unwrap()
    }

    #[test]
    fn f_is_normalized_and_positive() {
        for sigma in [0.02, 0.1, 0.3, 1.0] {
            let fam = wrapped_gaussian(sigma).unwrap();
            // independent check: the squared amplitude is exactly the wrapped
            // normal density, whose constant is 1/(σ√2π)
            let c2 = 1.0 / (sigma * (2.0 * PI).sqrt());
            assert!((fam.normalization().powi(2) - c2).abs() < 1e-10 * c2, "sigma {sigma}");
            let m = 4096;
            let integral: f64 = (0..m).map(|i| fam.density(i as f64 / m as f64)).sum::<f64>() / m as f64;
            assert!((integral - 1.0).abs() < 1e-10);
            assert!((0..100).all(|i| fam.f(i as f64 / 100.0) > 0.0));
        }
    }

    #[test]
    fn f_circular_variance() {
        let fam = wrapped_gaussian(0.1).unwrap();
        let m = 20_000;
        let var: f64 = (0..m)
            .map(|i| {
                let u = (i as f64 + 0.5) / m as f64 - 0.5;
                u * u * fam.density(u)
            })
            .sum::<f64>()
            / m as f64;
        assert!((var - 0.01).abs() < 0.05 * 0.01, "{var}");
    }

    #[test]
    fn wide_f_is_flat() {
        let fam = wrapped_gaussian(5.0).unwrap();
        for i in 0..50 {
            assert!((fam.f(i as f64 / 50.0) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(wrapped_gaussian(0.0).is_err());
        assert!(wrapped_gaussian(-1.0).is_err());
        assert!(wrapped_gaussian(f64::NAN).is_err());
    }

    #[test]
    fn f_coeffs_reproduce_f() {
        let fam = wrapped_gaussian(0.1).unwrap();
        for i in 0..37 {
            let x = i as f64 / 37.0;
            assert!((fam.f_coeffs().eval_real(x, 0.3) - fam.f(x)).abs() < 1e-12);
        }
        // Op_N of the table equals the diagonal Kraus operator at q = 0; the
        // table is longer than N/2, which only folds the diagonal evaluation
        let g = grid(64);
        let op = quantize_aliased(fam.f_coeffs(), g);
        assert!(op.max_abs_diff(&fam.kraus_operator(0.0, g)) < 1e-12);
    }

    #[test]
    fn resolution_of_identity() {
        let fam = wrapped_gaussian(0.1).unwrap();
        let g = grid(40);
        let q_count = 512;
        let mut acc = vec![0.0; 40];
        for i in 0..q_count {
            let q = (i as f64 + 0.5) / q_count as f64;
            for (a, d) in acc.iter_mut().zip(fam.kraus_diagonal(q, g)) {
                *a += d * d / q_count as f64;
            }
        }
        assert!(acc.iter().all(|a| (a - 1.0).abs() < 1e-6));
    }

    #[test]
    fn kraus_operator_limits() {
        let g = grid(16);
        let wide = wrapped_gaussian(5.0).unwrap();
        assert!(wide.kraus_operator(0.0, g).max_abs_diff(&TorusOperator::identity(g)) < 1e-6);
        let fam = wrapped_gaussian(0.05).unwrap();
        let op = fam.kraus_operator(0.37, g);
        assert!(op.is_diagonal());
        assert!((0..16).all(|k| op.entry(k, k).re > 0.0));
    }

    #[test]
    fn pi_n_single_lattice_term() {
        let g = grid(10);
        let bump = |x: f64| if (0.0..1.0).contains(&x) { c64::new(x * (1.0 - x), 0.0) } else { c64::new(0.0, 0.0) };
        let v = project_pi_n(bump, g);
        for (n, a) in v.iter().enumerate() {
            let x = n as f64 / 10.0;
            assert!((a - c64::new(x * (1.0 - x) / 10f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn pi_n_wraps_periodically() {
        let g = grid(20);
        let narrow = |x: f64| c64::new((-(x * x) / (2.0 * 0.01)).exp(), 0.0);
        let v = project_pi_n(narrow, g);
        // the Gaussian at 0 contributes from k = 0 at n = 0 and from k = 1 near n = N − 1
        assert!((v[1] - v[19]).norm() < 1e-15);
    }

    #[test]
    fn coherent_state_concentrates() {
        let spec = CoherentSpec::new(0.3, 0.1, 0.5, 0.1).unwrap();
        for n in [500, 1000] {
            let g = grid(n);
            let psi = coherent_state(&spec, g).unwrap();
            assert!((psi.norm() - 1.0).abs() < NORM_TOL);
            let w = 5.0 * (n as f64).powf(-0.5);
            let mass: f64 = psi
                .probabilities()
                .iter()
                .enumerate()
                .filter(|(k, _)| (*k as f64 / n as f64 - 0.3).abs() <= w)
                .map(|(_, p)| p)
                .sum();
            assert!(mass > 0.999);
        }
    }

    #[test]
    fn coherent_state_defect_pairing_decays() {
        let spec = CoherentSpec::new(0.1, 0.1, 0.5, 0.1).unwrap();
        let a = Symbol::cos_mode(1, 0);
        let b = Symbol::cos_mode(0, 1);
        let mut errs = Vec::new();
        for n in [250, 500, 1000, 2000] {
            let psi: DensityState = coherent_state(&spec, grid(n)).unwrap().into();
            let ea = (trace_pairing(&psi, &a).unwrap().re - (2.0 * PI * 0.1).cos()).abs();
            let eb = (trace_pairing(&psi, &b).unwrap().re - (2.0 * PI * 0.1).cos()).abs();
            errs.push(ea.max(eb));
        }
        for w in errs.windows(2) {
            assert!(w[1] <= 1.1 * w[0], "{errs:?}");
        }
        assert!(errs[3] < errs[0]);
    }

    #[test]
    fn beta0_states() {
        let g = grid(12);
        let psi = beta0_state(|_| c64::new(1.0, 0.0), 0.0, g).unwrap();
        let want = 1.0 / 12f64.sqrt();
        assert!(psi.amplitudes().iter().all(|a| (a - c64::new(want, 0.0)).norm() < 1e-15));

        let profile = PeriodicProfile::WrappedGaussian { center: 0.5, width: 0.15 };
        let amp = |x: f64| c64::new(profile.amplitude(x), 0.0);
        let mut defects = Vec::new();
        for n in [64, 128, 256, 512] {
            let c_n = l2_norm(&beta0_amplitudes(amp, 0.25, grid(n)));
            defects.push((c_n - 1.0).abs());
        }
        assert!(defects.iter().all(|d| *d < 1e-6), "{defects:?}");

        let psi: DensityState = beta0_state(amp, 0.3, grid(256)).unwrap().into();
        let pair = trace_pairing(&psi, &Symbol::cos_mode(0, 1)).unwrap().re;
        assert!((pair - (2.0 * PI * 0.3).cos()).abs() < 0.05);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CoherentSpec::new(0.1, 0.1, 0.0, 0.1).is_err());
        assert!(CoherentSpec::new(0.1, 0.1, 1.0, 0.1).is_err());
        assert!(CoherentSpec::new(0.1, 0.1, 0.5, 0.0).is_err());
        assert!(StateVector::normalized(grid(4), vec![c64::new(0.0, 0.0); 4]).is_err());
        assert!(StateVector::normalized(grid(4), vec![c64::new(1.0, 0.0); 3]).is_err());
    }
}
