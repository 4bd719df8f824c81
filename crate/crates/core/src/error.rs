use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size N = {0} is too small; N must be at least 2")]
    GridTooSmall(usize),

    #[error("metaplectic operators require an even grid size N, got N = {0}")]
    OddGrid(usize),

    #[error("symbol truncation order K = {k} aliases on a grid of size N = {n} (need K < N/2)")]
    Aliasing { k: usize, n: usize },

    #[error("matrix [[{a}, {b}], [{c}, {d}]] is not in SL(2, Z) (determinant {det})")]
    NotUnimodular { a: i64, b: i64, c: i64, d: i64, det: i64 },

    #[error("generator word for the symplectic matrix exceeds {0} letters")]
    WordTooLong(usize),

    #[error("Hamiltonian symbol must be real-valued")]
    NonRealSymbol,

    #[error("grid mismatch: expected N = {expected}, got N = {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state collapsed to (numerically) zero norm {0:e}")]
    DegenerateState(f64),

    #[error("oracle size limit exceeded: {0}")]
    OracleTooLarge(String),

    #[error("empty sample list")]
    EmptySamples,

    #[error("bin mismatch: {0} bins vs {1} bins")]
    BinMismatch(usize, usize),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
