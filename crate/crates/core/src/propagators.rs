//! Unit-time quantum evolutions on `H_N` and the classical maps they
//! quantize.
//!
//! Metaplectic operators are stored as a word of fast factors (diagonal
//! quadratic phases and discrete Fourier transforms) so that applying one to
//! a state costs `O(N log N)`. Hamiltonian propagators come from a dense
//! Hermitian eigendecomposition and are applied as dense matrices.
//!
//! Conventions, fixed by the exact Egorov relation `U⁻¹ Op_N(a) U = Op_N(a ∘ M)`:
//!
//! * the lower shear `L = [[1, 0], [1, 1]]` is quantized by
//!   `diag(e^{πi j²/N})`, which is `N`-periodic in `j` only for even `N`;
//! * `S = [[0, −1], [1, 0]]` is quantized by the inverse unitary DFT, so the
//!   forward DFT `N^{−1/2} e^{−2πijk/N}` quantizes `S⁻¹`.
//!
//! Global phases are left as they fall out of the generator product.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use faer::{Mat, Side};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::torus_ops::{self, quantize, quantize_aliased, symbol_from_samples, GridSize, Symbol, TorusOperator};
use crate::{Error, Result};

/// Maximum number of letters in a generator word.
pub const MAX_WORD_LEN: usize = 10_000;

/// Tolerance on `‖U U* − I‖_max` for every propagator.
pub const UNITARITY_TOL: f64 = 1e-10;

/// An integer 2×2 matrix of determinant one, acting on `(x, ξ)` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct SymplecticMatrix {
    a: i64,
    b: i64,
    c: i64,
    d: i64,
}

impl SymplecticMatrix {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        let det = a * d - b * c;
        if det != 1 {
            return Err(Error::NotUnimodular { a, b, c, d, det });
        }
        Ok(SymplecticMatrix { a, b, c, d })
    }

    pub const fn identity() -> Self {
        SymplecticMatrix { a: 1, b: 0, c: 0, d: 1 }
    }

    /// Arnold's cat map `[[2, 1], [1, 1]]`.
    pub const fn cat() -> Self {
        SymplecticMatrix { a: 2, b: 1, c: 1, d: 1 }
    }

    /// `[[2, 1], [3, 2]]`.
    pub const fn m2() -> Self {
        SymplecticMatrix { a: 2, b: 1, c: 3, d: 2 }
    }

    /// `[[4, 1], [15, 4]]`.
    pub const fn m3() -> Self {
        SymplecticMatrix { a: 4, b: 1, c: 15, d: 4 }
    }

    /// The elliptic matrix `[[−1, 1], [−1, 0]]` with `E³ = I`.
    pub const fn elliptic() -> Self {
        SymplecticMatrix { a: -1, b: 1, c: -1, d: 0 }
    }

    /// `S = [[0, −1], [1, 0]]`.
    pub const fn s() -> Self {
        SymplecticMatrix { a: 0, b: -1, c: 1, d: 0 }
    }

    /// `L^k = [[1, 0], [k, 1]]`.
    pub const fn lower_shear(k: i64) -> Self {
        SymplecticMatrix { a: 1, b: 0, c: k, d: 1 }
    }

    pub fn entries(&self) -> [i64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        SymplecticMatrix { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::identity(), |acc, _| acc * *self)
    }

    /// `M z mod 1`.
    pub fn apply(&self, z: [f64; 2]) -> [f64; 2] {
        let x = self.a as f64 * z[0] + self.b as f64 * z[1];
        let xi = self.c as f64 * z[0] + self.d as f64 * z[1];
        [x.rem_euclid(1.0), xi.rem_euclid(1.0)]
    }

    /// Spectral radius; `1` for elliptic and parabolic matrices.
    pub fn spectral_radius(&self) -> f64 {
        let t = self.trace().unsigned_abs() as f64;
        if t <= 2.0 {
            1.0
        } else {
            (t + (t * t - 4.0).sqrt()) / 2.0
        }
    }
}

impl std::ops::Mul for SymplecticMatrix {
    type Output = SymplecticMatrix;

    fn mul(self, r: SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

impl TryFrom<[i64; 4]> for SymplecticMatrix {
    type Error = Error;

    fn try_from(v: [i64; 4]) -> Result<Self> {
        SymplecticMatrix::new(v[0], v[1], v[2], v[3])
    }
}

impl From<SymplecticMatrix> for [i64; 4] {
    fn from(m: SymplecticMatrix) -> [i64; 4] {
        m.entries()
    }
}

impl fmt::Display for SymplecticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Letters of a word in the generators of `SL(2, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `L^k = [[1, 0], [k, 1]]`.
    Shear(i64),
    S,
    SInv,
}

impl Generator {
    pub fn matrix(self) -> SymplecticMatrix {
        match self {
            Generator::Shear(k) => SymplecticMatrix::lower_shear(k),
            Generator::S => SymplecticMatrix::s(),
            Generator::SInv => SymplecticMatrix::s().inverse(),
        }
    }

    fn inverse(self) -> Generator {
        match self {
            Generator::Shear(k) => Generator::Shear(-k),
            Generator::S => Generator::SInv,
            Generator::SInv => Generator::S,
        }
    }
}

/// Writes `M` as a product `g_1 g_2 ⋯ g_r` of shears and `S^{±1}`.
///
/// The first column of `M` is reduced by the Euclidean algorithm using left
/// multiplication by shears and `S⁻¹`; the remaining upper-triangular
/// factor `±[[1, b], [0, 1]]` is `S L^{−b} S⁻¹` up to `S² = −I`.
pub fn generator_word(m: &SymplecticMatrix) -> Result<Vec<Generator>> {
    let mut cur = *m;
    // left multipliers g_1, g_2, … in the order applied, so that
    // cur = ⋯ g_2 g_1 M and M = g_1⁻¹ g_2⁻¹ ⋯ cur
    let mut applied: Vec<Generator> = Vec::new();
    let push = |applied: &mut Vec<Generator>, g: Generator, cur: &mut SymplecticMatrix| -> Result<()> {
        *cur = g.matrix() * *cur;
        applied.push(g);
        if applied.len() > MAX_WORD_LEN {
            return Err(Error::WordTooLong(MAX_WORD_LEN));
        }
        Ok(())
    };
    while cur.c != 0 {
        if cur.a != 0 {
            let k = -(cur.c / cur.a);
            if k != 0 {
                push(&mut applied, Generator::Shear(k), &mut cur)?;
            }
        }
        if cur.c != 0 {
            // (a, c) -> (c, -a)
            push(&mut applied, Generator::SInv, &mut cur)?;
        }
    }
    if cur.a == -1 {
        push(&mut applied, Generator::S, &mut cur)?;
        push(&mut applied, Generator::S, &mut cur)?;
    }
    debug_assert_eq!((cur.a, cur.c, cur.d), (1, 0, 1));
    // cur = [[1, b], [0, 1]] = S L^{-b} S^{-1}
    let b = cur.b;
    let mut word: Vec<Generator> = applied.iter().map(|g| g.inverse()).collect();
    if b != 0 {
        word.extend([Generator::S, Generator::Shear(-b), Generator::SInv]);
    }
    let word = simplify_word(word);
    if word.len() > MAX_WORD_LEN {
        return Err(Error::WordTooLong(MAX_WORD_LEN));
    }
    Ok(word)
}

fn simplify_word(word: Vec<Generator>) -> Vec<Generator> {
    let mut out: Vec<Generator> = Vec::with_capacity(word.len());
    for g in word {
        match (out.last().copied(), g) {
            (Some(Generator::Shear(a)), Generator::Shear(b)) => {
                out.pop();
                if a + b != 0 {
                    out.push(Generator::Shear(a + b));
                }
            }
            (Some(Generator::S), Generator::SInv) | (Some(Generator::SInv), Generator::S) => {
                out.pop();
            }
            (_, Generator::Shear(0)) => {}
            _ => out.push(g),
        }
    }
    out
}

/// Product of a generator word.
pub fn word_product(word: &[Generator]) -> SymplecticMatrix {
    word.iter().fold(SymplecticMatrix::identity(), |acc, g| acc * g.matrix())
}

/// The classical system a propagator quantizes.
#[derive(Debug, Clone)]
pub enum FlowKind {
    Linear(SymplecticMatrix),
    /// Hamiltonian flow of a real symbol over one measurement interval.
    Hamiltonian { symbol: Symbol, t_step: f64 },
}

/// Finite-time Lyapunov horizon for Hamiltonian flows.
pub const LYAPUNOV_HORIZON: f64 = 50.0;

/// Minimum RK4 substeps per classical step.
pub const MIN_SUBSTEPS: usize = 100;

/// A classical dynamical system on `T²` with a cached Lyapunov exponent.
#[derive(Debug, Clone)]
pub struct FlowDescriptor {
    kind: FlowKind,
    lyapunov: OnceLock<f64>,
}

impl FlowDescriptor {
    pub fn linear(m: SymplecticMatrix) -> Self {
        FlowDescriptor { kind: FlowKind::Linear(m), lyapunov: OnceLock::new() }
    }

    pub fn hamiltonian(symbol: Symbol, t_step: f64) -> Result<Self> {
        if !symbol.is_real() {
            return Err(Error::NonRealSymbol);
        }
        if !t_step.is_finite() {
            return Err(Error::param("time step must be finite"));
        }
        Ok(FlowDescriptor { kind: FlowKind::Hamiltonian { symbol, t_step }, lyapunov: OnceLock::new() })
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    /// `φ¹(z)`, reduced mod 1.
    pub fn step(&self, z: [f64; 2]) -> [f64; 2] {
        match &self.kind {
            FlowKind::Linear(m) => m.apply(z),
            FlowKind::Hamiltonian { symbol, t_step } => {
                let w = integrate(symbol, z, *t_step, substeps(*t_step));
                [w[0].rem_euclid(1.0), w[1].rem_euclid(1.0)]
            }
        }
    }

    /// `φⁿ(z)`.
    pub fn iterate(&self, z: [f64; 2], n: usize) -> [f64; 2] {
        (0..n).fold(z, |z, _| self.step(z))
    }

    /// Lyapunov exponent, computed once and cached.
    pub fn lyapunov(&self) -> f64 {
        *self.lyapunov.get_or_init(|| match &self.kind {
            FlowKind::Linear(m) => m.spectral_radius().ln(),
            FlowKind::Hamiltonian { symbol, t_step } => finite_time_lyapunov(symbol, *t_step),
        })
    }
}

/// `φ¹(z)` for the given flow.
pub fn classical_step(flow: &FlowDescriptor, z: [f64; 2]) -> [f64; 2] {
    flow.step(z)
}

pub fn lyapunov_exponent(flow: &FlowDescriptor) -> f64 {
    flow.lyapunov()
}

fn substeps(t: f64) -> usize {
    MIN_SUBSTEPS.max((t.abs() / 5e-4).ceil() as usize)
}

/// Hamiltonian vector field `(∂_ξ p, −∂_x p)`.
fn vector_field(p: &Symbol, z: [f64; 2]) -> [f64; 2] {
    let g = p.gradient(z[0], z[1]);
    [g[1], -g[0]]
}

/// Classical RK4 over time `t` with `steps` equal substeps, unreduced.
fn integrate(p: &Symbol, z: [f64; 2], t: f64, steps: usize) -> [f64; 2] {
    let dt = t / steps as f64;
    let mut z = z;
    let add = |z: [f64; 2], k: [f64; 2], s: f64| [z[0] + s * k[0], z[1] + s * k[1]];
    for _ in 0..steps {
        let k1 = vector_field(p, z);
        let k2 = vector_field(p, add(z, k1, dt / 2.0));
        let k3 = vector_field(p, add(z, k2, dt / 2.0));
        let k4 = vector_field(p, add(z, k3, dt));
        for i in 0..2 {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

/// Flow plus tangent map: state `(x, ξ, J11, J12, J21, J22)`.
fn tangent_field(p: &Symbol, s: &[f64; 6]) -> [f64; 6] {
    let g = p.gradient(s[0], s[1]);
    let [hxx, hxk, hkk] = p.hessian(s[0], s[1]);
    // d/dt J = A J with A = [[p_xξ, p_ξξ], [−p_xx, −p_xξ]]
    let a = [[hxk, hkk], [-hxx, -hxk]];
    let j = [[s[2], s[3]], [s[4], s[5]]];
    let mut out = [g[1], -g[0], 0.0, 0.0, 0.0, 0.0];
    for r in 0..2 {
        for c in 0..2 {
            out[2 + 2 * r + c] = a[r][0] * j[0][c] + a[r][1] * j[1][c];
        }
    }
    out
}

fn spectral_norm_2x2(j: [f64; 4]) -> f64 {
    let [a, b, c, d] = j;
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

/// Average of `(1/T) log ‖Dφ_T‖` over a 32-point grid of initial
/// conditions, `T = 50`.
fn finite_time_lyapunov(p: &Symbol, t_step: f64) -> f64 {
    let dt = if t_step.abs() > 0.0 { (t_step.abs() / MIN_SUBSTEPS as f64).min(1e-3) } else { 1e-3 };
    let steps = (LYAPUNOV_HORIZON / dt).round() as usize;
    let t_total = steps as f64 * dt;
    let starts = (0..8).flat_map(|i| (0..4).map(move |j| [(i as f64 + 0.5) / 8.0, (j as f64 + 0.5) / 4.0]));
    let mut total = 0.0;
    let mut count = 0usize;
    for z in starts {
        let mut s = [z[0], z[1], 1.0, 0.0, 0.0, 1.0];
        for _ in 0..steps {
            let k1 = tangent_field(p, &s);
            let k2 = tangent_field(p, &offset(&s, &k1, dt / 2.0));
            let k3 = tangent_field(p, &offset(&s, &k2, dt / 2.0));
            let k4 = tangent_field(p, &offset(&s, &k3, dt));
            for i in 0..6 {
                s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        total += spectral_norm_2x2([s[2], s[3], s[4], s[5]]).ln() / t_total;
        count += 1;
    }
    (total / count as f64).max(0.0)
}

fn offset(s: &[f64; 6], k: &[f64; 6], h: f64) -> [f64; 6] {
    let mut out = *s;
    for i in 0..6 {
        out[i] += h * k[i];
    }
    out
}

/// `log(N) / (2Γ)`; `+∞` when `Γ = 0`.
pub fn ehrenfest_time(grid: GridSize, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        f64::INFINITY
    } else {
        (grid.n() as f64).ln() / (2.0 * gamma)
    }
}

/// `δ log(N / C₀) / (Γ + ε)`, the horizon with explicit constants.
pub fn ehrenfest_time_with(grid: GridSize, gamma: f64, delta: f64, eps: f64, c0: f64) -> f64 {
    let denom = gamma + eps;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        delta * (grid.n() as f64 / c0).ln() / denom
    }
}

/// One fast factor of a metaplectic operator.
#[derive(Clone)]
enum Factor {
    Diagonal(Vec<c64>),
    /// `N^{−1/2} e^{−2πijk/N}`
    Dft,
    /// `N^{−1/2} e^{+2πijk/N}`
    InverseDft,
}

#[derive(Clone)]
enum Action {
    /// Factors in application order (rightmost matrix first).
    Factored { factors: Vec<Factor>, forward: Arc<dyn Fft<f64>>, inverse: Arc<dyn Fft<f64>> },
    Dense(Mat<c64>),
}

/// A unitary evolution over one measurement interval, together with the
/// classical flow it quantizes.
#[derive(Clone)]
pub struct Propagator {
    grid: GridSize,
    flow: FlowDescriptor,
    action: Action,
}

impl fmt::Debug for Propagator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let action = match &self.action {
            Action::Factored { factors, .. } => format!("factored({} factors)", factors.len()),
            Action::Dense(_) => "dense".to_string(),
        };
        f.debug_struct("Propagator").field("grid", &self.grid).field("flow", &self.flow).field("action", &action).finish()
    }
}

/// Scratch buffers for [`Propagator::apply`]; one per worker.
#[derive(Debug, Default)]
pub struct Workspace {
    buffer: Vec<c64>,
    scratch: Vec<c64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn chirp(grid: GridSize, k: i64) -> Vec<c64> {
    let n = grid.n() as i64;
    (0..n).map(|j| c64::cis(PI * ((k * j % (2 * n)) * j).rem_euclid(2 * n) as f64 / n as f64)).collect()
}

impl Propagator {
    fn factored(grid: GridSize, flow: FlowDescriptor, factors: Vec<Factor>) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(grid.n());
        let inverse = planner.plan_fft_inverse(grid.n());
        Propagator { grid, flow, action: Action::Factored { factors, forward, inverse } }
    }

    /// Wraps an explicit matrix. Fails unless it is unitary to
    /// [`UNITARITY_TOL`].
    pub fn from_matrix(grid: GridSize, flow: FlowDescriptor, matrix: Mat<c64>) -> Result<Self> {
        TorusOperator::from_matrix(grid, matrix.clone())?;
        let p = Propagator { grid, flow, action: Action::Dense(matrix) };
        let defect = p.unitarity_defect();
        if defect > UNITARITY_TOL {
            return Err(Error::param(format!("matrix is not unitary (defect {defect:e})")));
        }
        Ok(p)
    }

    pub fn grid(&self) -> GridSize {
        self.grid
    }

    pub fn flow(&self) -> &FlowDescriptor {
        &self.flow
    }

    /// `v ← U v`.
    pub fn apply(&self, v: &mut [c64], ws: &mut Workspace) {
        let n = self.grid.n();
        assert_eq!(v.len(), n, "state dimension does not match propagator");
        match &self.action {
            Action::Dense(u) => {
                ws.buffer.clear();
                ws.buffer.resize(n, c64::new(0.0, 0.0));
                for (j, &vj) in v.iter().enumerate() {
                    for (o, &a) in ws.buffer.iter_mut().zip(u.col_as_slice(j)) {
                        *o += a * vj;
                    }
                }
                v.copy_from_slice(&ws.buffer);
            }
            Action::Factored { factors, forward, inverse } => {
                let scale = 1.0 / (n as f64).sqrt();
                for factor in factors {
                    match factor {
                        Factor::Diagonal(d) => v.iter_mut().zip(d).for_each(|(x, y)| *x *= y),
                        Factor::Dft | Factor::InverseDft => {
                            let fft = if matches!(factor, Factor::Dft) { forward } else { inverse };
                            ws.scratch.resize(fft.get_inplace_scratch_len(), c64::new(0.0, 0.0));
                            fft.process_with_scratch(v, &mut ws.scratch);
                            v.iter_mut().for_each(|x| *x *= scale);
                        }
                    }
                }
            }
        }
    }

    /// The dense matrix of `U`.
    pub fn matrix(&self) -> Mat<c64> {
        match &self.action {
            Action::Dense(u) => u.clone(),
            Action::Factored { .. } => {
                let n = self.grid.n();
                let mut out = Mat::<c64>::zeros(n, n);
                let mut ws = Workspace::new();
                let mut col = vec![c64::new(0.0, 0.0); n];
                for j in 0..n {
                    col.iter_mut().for_each(|x| *x = c64::new(0.0, 0.0));
                    col[j] = c64::new(1.0, 0.0);
                    self.apply(&mut col, &mut ws);
                    out.col_as_slice_mut(j).copy_from_slice(&col);
                }
                out
            }
        }
    }

    pub fn operator(&self) -> TorusOperator {
        TorusOperator::from_matrix(self.grid, self.matrix()).expect("propagator matrix has grid dimensions")
    }

    /// `‖U U* − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.matrix();
        let n = self.grid.n();
        let prod = &u * u.adjoint();
        torus_ops::max_abs_diff(&prod, &Mat::identity(n, n))
    }

    /// `U⁻¹ A U` for an operator on the same grid.
    pub fn conjugate(&self, op: &TorusOperator) -> Result<TorusOperator> {
        self.grid.check_same(op.grid())?;
        let u = self.matrix();
        let m = u.adjoint() * op.matrix() * &u;
        TorusOperator::from_matrix(self.grid, m)
    }
}

/// The explicit quantum cat matrix
/// `(M̂)_{jk} = N^{−1/2} exp(πi (2k² − 2jk + j²)/N)`.
pub fn quantum_cat_matrix(grid: GridSize) -> Result<Mat<c64>> {
    grid.require_even()?;
    let n = grid.n() as i64;
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Mat::from_fn(grid.n(), grid.n(), |j, k| {
        let (j, k) = (j as i64, k as i64);
        let s = (2 * k * k - 2 * j * k + j * j).rem_euclid(2 * n);
        c64::cis(PI * s as f64 / n as f64) * scale
    }))
}

/// The quantum cat map, applied as `diag(e^{πij²/N}) · DFT · diag(e^{2πik²/N})`,
/// which is entrywise the explicit cat matrix.
pub fn quantize_cat(grid: GridSize) -> Result<Propagator> {
    grid.require_even()?;
    let factors = vec![Factor::Diagonal(chirp(grid, 2)), Factor::Dft, Factor::Diagonal(chirp(grid, 1))];
    Ok(Propagator::factored(grid, FlowDescriptor::linear(SymplecticMatrix::cat()), factors))
}

/// Metaplectic operator of `M`, assembled from its generator word.
pub fn quantize_symplectic(m: &SymplecticMatrix, grid: GridSize) -> Result<Propagator> {
    grid.require_even()?;
    let m = SymplecticMatrix::new(m.a, m.b, m.c, m.d)?;
    let word = generator_word(&m)?;
    let mut factors: Vec<Factor> = Vec::with_capacity(word.len());
    // U = Û(g_1) ⋯ Û(g_r); the last letter acts first
    for g in word.iter().rev() {
        let f = match *g {
            Generator::Shear(k) => Factor::Diagonal(chirp(grid, k)),
            Generator::S => Factor::InverseDft,
            Generator::SInv => Factor::Dft,
        };
        match (factors.last_mut(), f) {
            (Some(Factor::Diagonal(prev)), Factor::Diagonal(next)) => prev.iter_mut().zip(&next).for_each(|(a, b)| *a *= b),
            (_, f) => factors.push(f),
        }
    }
    Ok(Propagator::factored(grid, FlowDescriptor::linear(m), factors))
}

/// Eigendecomposition of the Hermitian part of `Op_N(p)`, reusable for any
/// evolution time.
#[derive(Clone)]
pub struct HamiltonianSpectrum {
    grid: GridSize,
    symbol: Symbol,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<c64>,
}

impl HamiltonianSpectrum {
    pub fn new(p: &Symbol, grid: GridSize) -> Result<Self> {
        if !p.is_real() {
            return Err(Error::NonRealSymbol);
        }
        let op = quantize(p, grid)?;
        let pm = op.matrix();
        let n = grid.n();
        let herm = Mat::<c64>::from_fn(n, n, |i, j| (pm[(i, j)] + pm[(j, i)].conj()) * 0.5);
        let evd = herm.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        let eigenvalues = (0..n).map(|i| s[i].re).collect();
        Ok(HamiltonianSpectrum { grid, symbol: p.clone(), eigenvalues, eigenvectors: evd.U().to_owned() })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `exp(−2πi t N H)`.
    pub fn unitary(&self, t: f64) -> Mat<c64> {
        let n = self.grid.n();
        let scale = -2.0 * PI * t * n as f64;
        let phases: Vec<c64> = self.eigenvalues.iter().map(|&l| c64::cis(scale * l)).collect();
        let v = &self.eigenvectors;
        let vd = Mat::<c64>::from_fn(n, n, |i, j| v[(i, j)] * phases[j]);
        vd * v.adjoint()
    }

    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        let flow = FlowDescriptor::hamiltonian(self.symbol.clone(), t)?;
        Ok(Propagator { grid: self.grid, flow, action: Action::Dense(self.unitary(t)) })
    }
}

/// `exp(−2πi t N Op_N(p))` for a real symbol `p`.
pub fn hamiltonian_propagator(p: &Symbol, grid: GridSize, t: f64) -> Result<Propagator> {
    HamiltonianSpectrum::new(p, grid)?.propagator(t)
}

/// `‖U⁻¹ Op_N(a) U − Op_N(a ∘ M)‖_max` for a metaplectic `U` quantizing `M`.
pub fn metaplectic_egorov_residual(u: &Propagator, a: &Symbol) -> Result<f64> {
    let m = match u.flow().kind() {
        FlowKind::Linear(m) => *m,
        FlowKind::Hamiltonian { .. } => return Err(Error::param("expected a metaplectic propagator")),
    };
    let lhs = u.conjugate(&quantize_aliased(a, u.grid()))?;
    let rhs = quantize_aliased(&a.compose_linear(&m), u.grid());
    Ok(lhs.max_abs_diff(&rhs))
}

/// Both sides of the Hamiltonian Egorov relation compared in two norms.
#[derive(Debug, Clone, Copy)]
pub struct EgorovResidual {
    pub max_entry: f64,
    pub operator_norm: f64,
}

/// Sampling order for the Fourier table of `a ∘ φ_t`; lowered on small
/// grids to the largest odd order that does not alias.
pub const FLOWED_SYMBOL_ORDER: usize = 65;

/// `U⁻¹ Op_N(a) U − Op_N(a ∘ φ_t)` for a Hamiltonian propagator, with
/// `a ∘ φ_t` sampled on a grid by RK4 and converted to a Fourier table.
pub fn hamiltonian_egorov_residual(u: &Propagator, a: &Symbol) -> Result<EgorovResidual> {
    let flow = u.flow();
    if matches!(flow.kind(), FlowKind::Linear(_)) {
        return Err(Error::param("expected a Hamiltonian propagator"));
    }
    let n = u.grid().n();
    let order = FLOWED_SYMBOL_ORDER.min(if n.is_multiple_of(2) { n - 1 } else { n - 2 }).max(3);
    let flowed = symbol_from_samples(
        |x, xi| {
            let z = flow.step([x, xi]);
            a.eval(z[0], z[1])
        },
        order,
    )?;
    let lhs = u.conjugate(&quantize(a, u.grid())?)?;
    let rhs = quantize(&flowed, u.grid())?;
    let diff = Mat::<c64>::from_fn(u.grid().n(), u.grid().n(), |i, j| lhs.entry(i, j) - rhs.entry(i, j));
    Ok(EgorovResidual { max_entry: lhs.max_abs_diff(&rhs), operator_norm: torus_ops::operator_norm(&diff)? })
}
