//! Symbols on the phase-space torus `T² = (R/Z)²` and their quantizations.
//!
//! A [`Symbol`] is a finite Fourier table `â(k, m)` with
//! `a(x, ξ) = Σ â(k, m) e^{2πi(kx + mξ)}`. Its quantization on the grid of
//! size `N` acts on the position basis `Q_0, …, Q_{N−1}` of `H_N` by
//! `Op_N(a) Q_j = Σ_m A_{mj} Q_m` with
//!
//! ```text
//! A_{mj} = Σ_{k,l} â(k, j − m − lN) (−1)^{kl} e^{πi (j + m) k / N}.
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul};

use faer::Mat;
use rustfft::FftPlanner;

use crate::c64;
use crate::propagators::SymplecticMatrix;
use crate::states::StateVector;
use crate::{Error, Result};

/// Size of the quantized torus `H_N`; the semiclassical parameter is
/// `h = 1/(2πN)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridSize(usize);

impl GridSize {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooSmall(n));
        }
        Ok(GridSize(n))
    }

    /// Same as [`GridSize::new`], additionally requiring `N` even.
    pub fn even(n: usize) -> Result<Self> {
        let grid = Self::new(n)?;
        grid.require_even()?;
        Ok(grid)
    }

    pub fn n(self) -> usize {
        self.0
    }

    pub fn h(self) -> f64 {
        1.0 / (2.0 * PI * self.0 as f64)
    }

    pub fn is_even(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn require_even(self) -> Result<()> {
        if self.is_even() {
            Ok(())
        } else {
            Err(Error::OddGrid(self.0))
        }
    }

    /// Position `x_j = j/N` of the basis vector `Q_j`.
    pub fn position(self, j: usize) -> f64 {
        j as f64 / self.0 as f64
    }

    pub(crate) fn check_same(self, other: GridSize) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: self.0, found: other.0 })
        }
    }
}

/// Relative magnitude below which sampled Fourier coefficients are dropped.
const SAMPLE_PRUNE_REL: f64 = 1e-15;

/// A smooth observable on `T²` stored as a truncated Fourier table.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    coeffs: BTreeMap<(i64, i64), c64>,
    real: bool,
}

impl Symbol {
    /// Builds a symbol from `(k, m, â(k, m))` triples. Repeated indices are
    /// summed. The symbol is flagged real when the table is conjugate
    /// symmetric to within `1e-14`.
    pub fn from_coeffs(terms: impl IntoIterator<Item = ((i64, i64), c64)>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (idx, c) in terms {
            *coeffs.entry(idx).or_insert(c64::new(0.0, 0.0)) += c;
        }
        let mut s = Symbol { coeffs, real: false };
        s.real = s.conjugate_symmetric(1e-14);
        s
    }

    pub fn zero() -> Self {
        Symbol { coeffs: BTreeMap::new(), real: true }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_coeffs([((0, 0), c64::new(value, 0.0))])
    }

    /// `cos(2π(kx + mξ))`.
    pub fn cos_mode(k: i64, m: i64) -> Self {
        let half = c64::new(0.5, 0.0);
        Self::from_coeffs([((k, m), half), ((-k, -m), half)])
    }

    /// The Hamiltonian `cos(2πx) + cos(2πξ)`.
    pub fn cos_sum() -> Self {
        Self::cos_mode(1, 0) + Self::cos_mode(0, 1)
    }

    pub fn coeff(&self, k: i64, m: i64) -> c64 {
        self.coeffs.get(&(k, m)).copied().unwrap_or(c64::new(0.0, 0.0))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = ((i64, i64), c64)> + '_ {
        self.coeffs.iter().map(|(&idx, &c)| (idx, c))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Truncation order `K = max(|k|, |m|)` over stored coefficients.
    pub fn order(&self) -> usize {
        self.coeffs
            .keys()
            .map(|&(k, m)| k.unsigned_abs().max(m.unsigned_abs()))
            .max()
            .unwrap_or(0) as usize
    }

    /// Largest `|m|` (momentum frequency) among stored coefficients.
    pub fn momentum_order(&self) -> usize {
        self.coeffs.keys().map(|&(_, m)| m.unsigned_abs()).max().unwrap_or(0) as usize
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// `Σ |â(k, m)|`, an upper bound for `‖a‖_∞`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    fn conjugate_symmetric(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|(&(k, m), &c)| (self.coeff(-k, -m).conj() - c).norm() <= tol)
    }

    pub fn eval(&self, x: f64, xi: f64) -> c64 {
        self.coeffs
            .iter()
            .map(|(&(k, m), &c)| c * c64::cis(2.0 * PI * (k as f64 * x + m as f64 * xi)))
            .sum()
    }

    /// Real part of [`Symbol::eval`]; exact for real symbols.
    pub fn eval_real(&self, x: f64, xi: f64) -> f64 {
        self.eval(x, xi).re
    }

    /// `(∂_x a, ∂_ξ a)` for a real symbol.
    pub fn gradient(&self, x: f64, xi: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&(k, m), &c) in &self.coeffs {
            let w = c * c64::cis(2.0 * PI * (k as f64 * x + m as f64 * xi)) * c64::new(0.0, 2.0 * PI);
            g[0] += (w * k as f64).re;
            g[1] += (w * m as f64).re;
        }
        g
    }

    /// `(∂²_x a, ∂_x∂_ξ a, ∂²_ξ a)` for a real symbol.
    pub fn hessian(&self, x: f64, xi: f64) -> [f64; 3] {
        let mut h = [0.0; 3];
        let scale = -4.0 * PI * PI;
        for (&(k, m), &c) in &self.coeffs {
            let w = c * c64::cis(2.0 * PI * (k as f64 * x + m as f64 * xi)) * scale;
            let (k, m) = (k as f64, m as f64);
            h[0] += (w * (k * k)).re;
            h[1] += (w * (k * m)).re;
            h[2] += (w * (m * m)).re;
        }
        h
    }

    /// The symbol `a ∘ M` for an integer matrix acting on `(x, ξ)`, computed
    /// exactly by remapping Fourier indices: `(k, m) ↦ Mᵀ(k, m)`.
    pub fn compose_linear(&self, mat: &SymplecticMatrix) -> Symbol {
        let [a, b, c, d] = mat.entries();
        Symbol::from_coeffs(self.coeffs.iter().map(|(&(k, m), &v)| ((a * k + c * m, b * k + d * m), v)))
    }

    /// Drops coefficients with `|â| ≤ tol`.
    pub fn pruned(mut self, tol: f64) -> Symbol {
        self.coeffs.retain(|_, c| c.norm() > tol);
        self
    }
}

impl Add for Symbol {
    type Output = Symbol;

    fn add(self, rhs: Symbol) -> Symbol {
        Symbol::from_coeffs(self.coeffs.into_iter().chain(rhs.coeffs))
    }
}

impl Mul<c64> for Symbol {
    type Output = Symbol;

    fn mul(self, rhs: c64) -> Symbol {
        Symbol::from_coeffs(self.coeffs.into_iter().map(|(idx, c)| (idx, c * rhs)))
    }
}

/// Discrete Fourier coefficients of `f` sampled on a `grid_order × grid_order`
/// uniform grid of `T²`. Coefficients with `|k|, |m| ≤ (grid_order − 1)/2`
/// are kept; a real-valued `f` yields an exactly conjugate-symmetric table.
pub fn symbol_from_samples<F>(f: F, grid_order: usize) -> Result<Symbol>
where
    F: Fn(f64, f64) -> c64,
{
    if grid_order < 3 {
        return Err(Error::param(format!("grid_order must be at least 3, got {grid_order}")));
    }
    let g = grid_order;
    let mut data: Vec<c64> = Vec::with_capacity(g * g);
    let mut scale = 0.0f64;
    let mut max_imag = 0.0f64;
    for i in 0..g {
        for j in 0..g {
            let v = f(i as f64 / g as f64, j as f64 / g as f64);
            scale = scale.max(v.norm());
            max_imag = max_imag.max(v.im.abs());
            data.push(v);
        }
    }
    let real = max_imag <= 1e-14 * scale.max(1.0);
    if real {
        for v in &mut data {
            v.im = 0.0;
        }
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(g);
    // rows: index i fixed, transform over j
    for row in data.chunks_exact_mut(g) {
        fft.process(row);
    }
    let mut column = vec![c64::new(0.0, 0.0); g];
    for j in 0..g {
        for i in 0..g {
            column[i] = data[i * g + j];
        }
        fft.process(&mut column);
        for i in 0..g {
            data[i * g + j] = column[i];
        }
    }

    let norm = 1.0 / (g * g) as f64;
    let kmax = ((g - 1) / 2) as i64;
    let at = |k: i64, m: i64| data[k.rem_euclid(g as i64) as usize * g + m.rem_euclid(g as i64) as usize] * norm;
    let peak = data.iter().map(|c| c.norm() * norm).fold(0.0, f64::max);
    let tol = SAMPLE_PRUNE_REL * peak;

    let mut coeffs = BTreeMap::new();
    for k in -kmax..=kmax {
        for m in -kmax..=kmax {
            let mut c = at(k, m);
            if real {
                c = (c + at(-k, -m).conj()) * 0.5;
            }
            if c.norm() > tol {
                coeffs.insert((k, m), c);
            }
        }
    }
    Ok(Symbol { coeffs, real })
}

/// An `N × N` matrix in the `Q_j` basis of `H_N`.
#[derive(Debug, Clone)]
pub struct TorusOperator {
    grid: GridSize,
    matrix: Mat<c64>,
}

impl TorusOperator {
    pub fn from_matrix(grid: GridSize, matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(Error::GridMismatch { expected: grid.n(), found: matrix.nrows() });
        }
        Ok(TorusOperator { grid, matrix })
    }

    pub fn identity(grid: GridSize) -> Self {
        TorusOperator { grid, matrix: Mat::identity(grid.n(), grid.n()) }
    }

    pub fn diagonal(grid: GridSize, diag: &[c64]) -> Result<Self> {
        if diag.len() != grid.n() {
            return Err(Error::GridMismatch { expected: grid.n(), found: diag.len() });
        }
        let n = grid.n();
        Ok(TorusOperator { grid, matrix: Mat::from_fn(n, n, |i, j| if i == j { diag[i] } else { c64::new(0.0, 0.0) }) })
    }

    pub fn grid(&self) -> GridSize {
        self.grid
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> c64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> TorusOperator {
        TorusOperator { grid: self.grid, matrix: self.matrix.adjoint().to_owned() }
    }

    pub fn compose(&self, rhs: &TorusOperator) -> Result<TorusOperator> {
        self.grid.check_same(rhs.grid)?;
        Ok(TorusOperator { grid: self.grid, matrix: &self.matrix * &rhs.matrix })
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let n = self.grid.n();
        let mut out = vec![c64::new(0.0, 0.0); n];
        for (j, &vj) in v.iter().enumerate().take(n) {
            if vj == c64::new(0.0, 0.0) {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.matrix.col_as_slice(j)) {
                *o += a * vj;
            }
        }
        out
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &TorusOperator) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// `‖A − A*‖_max`.
    pub fn hermitian_defect(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint().to_owned())
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.grid.n();
        (0..n).all(|j| (0..n).all(|i| i == j || self.matrix[(i, j)] == c64::new(0.0, 0.0)))
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> Result<f64> {
        operator_norm(&self.matrix)
    }

    pub fn trace(&self) -> c64 {
        (0..self.grid.n()).map(|i| self.matrix[(i, i)]).sum()
    }
}

pub(crate) fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for (x, y) in a.col_as_slice(j).iter().zip(b.col_as_slice(j)) {
            worst = worst.max((x - y).norm());
        }
    }
    worst
}

pub(crate) fn operator_norm(a: &Mat<c64>) -> Result<f64> {
    let s = a.singular_values().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

/// Table of `e^{πi s/N}` for `s = 0, …, 2N − 1`.
fn half_phase_table(n: usize) -> Vec<c64> {
    (0..2 * n).map(|s| c64::cis(PI * s as f64 / n as f64)).collect()
}

/// Visits every `(row, col, weight)` contribution of a single Fourier
/// coefficient `(k, m)` to `Op_N`. Exactly one row per column is hit.
#[inline]
fn for_each_entry(n: usize, k: i64, m: i64, phases: &[c64], mut visit: impl FnMut(usize, usize, c64)) {
    let n_i = n as i64;
    for j in 0..n_i {
        let row = (j - m).rem_euclid(n_i);
        let l = (j - m - row) / n_i;
        let s = (k * (l * n_i + j + row)).rem_euclid(2 * n_i) as usize;
        visit(row as usize, j as usize, phases[s]);
    }
}

/// `Op_N(a)`. Rejects symbols whose truncation order reaches `N/2`.
pub fn quantize(a: &Symbol, grid: GridSize) -> Result<TorusOperator> {
    let k = a.order();
    if 2 * k >= grid.n() {
        return Err(Error::Aliasing { k, n: grid.n() });
    }
    Ok(quantize_aliased(a, grid))
}

/// `Op_N(a)` summed over every stored coefficient with no truncation check.
///
/// The coordinate formula stays exact when several coefficients share a
/// residue of `m` mod `N`; this entry point exists for composed symbols such
/// as `a ∘ M`, whose order grows with `M` while `Op_N(a ∘ M)` remains well
/// defined.
pub fn quantize_aliased(a: &Symbol, grid: GridSize) -> TorusOperator {
    let n = grid.n();
    let phases = half_phase_table(n);
    let mut matrix = Mat::<c64>::zeros(n, n);
    for ((k, m), c) in a.coeffs() {
        for_each_entry(n, k, m, &phases, |row, col, w| matrix[(row, col)] += c * w);
    }
    TorusOperator { grid, matrix }
}

/// `Op_N(a) v` without materialising the matrix.
pub fn apply_symbol(a: &Symbol, grid: GridSize, v: &[c64]) -> Result<Vec<c64>> {
    if v.len() != grid.n() {
        return Err(Error::GridMismatch { expected: grid.n(), found: v.len() });
    }
    let n = grid.n();
    let phases = half_phase_table(n);
    let mut out = vec![c64::new(0.0, 0.0); n];
    for ((k, m), c) in a.coeffs() {
        for_each_entry(n, k, m, &phases, |row, col, w| out[row] += c * w * v[col]);
    }
    Ok(out)
}

/// A density operator on `H_N`.
#[derive(Debug, Clone)]
pub enum DensityState {
    /// The rank-one projector `|ψ⟩⟨ψ|`.
    Pure(StateVector),
    /// A general density matrix.
    Mixed(TorusOperator),
}

impl DensityState {
    pub fn grid(&self) -> GridSize {
        match self {
            DensityState::Pure(v) => v.grid(),
            DensityState::Mixed(op) => op.grid(),
        }
    }
}

impl From<StateVector> for DensityState {
    fn from(v: StateVector) -> Self {
        DensityState::Pure(v)
    }
}

/// `tr(ρ Op_N(a))`. Pure states are handled as `⟨Op_N(a) ψ, ψ⟩`.
pub fn trace_pairing(rho: &DensityState, a: &Symbol) -> Result<c64> {
    match rho {
        DensityState::Pure(psi) => {
            let image = apply_symbol(a, psi.grid(), psi.amplitudes())?;
            Ok(image.iter().zip(psi.amplitudes()).map(|(x, y)| x * y.conj()).sum())
        }
        DensityState::Mixed(op) => {
            let quantized = quantize_aliased(a, op.grid());
            Ok(op.compose(&quantized)?.trace())
        }
    }
}
