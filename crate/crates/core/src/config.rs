//! Declarative run descriptions in TOML.
//!
//! ```toml
//! n = 2000
//! seed = 20240101
//! trials = 2000
//! n_steps = 8
//! bins = 100
//! output_dir = "out/fig3"
//!
//! [state]
//! kind = "coherent"
//! x0 = 0.1
//! p0 = 0.1
//! beta = 0.5
//! sigma_prime = 0.1
//!
//! [kraus]
//! sigma = 0.1
//!
//! [evolution]
//! kind = "cat"
//! ```
//!
//! Other evolutions are `{ kind = "symplectic", matrix = [a, b, c, d] }` and
//! `{ kind = "hamiltonian", t = 0.05, symbol = { kind = "cos_sum" } }`, where
//! the symbol may also be `{ kind = "terms", terms = [{ k, m, re, im }] }`.
//! Sweeps read `n_list`; Lyapunov comparisons read `matrices`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::c64;
use crate::propagators::{FlowDescriptor, SymplecticMatrix};
use crate::states::KrausFamily;
use crate::torus_ops::{GridSize, Symbol};
use crate::trajectory::{ExperimentConfig, InitialState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    pub seed: u64,
    pub trials: usize,
    pub n_steps: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub state: InitialState,
    pub kraus: KrausSpec,
    pub evolution: EvolutionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<SymplecticMatrix>>,
}

fn default_bins() -> usize {
    crate::analysis::DEFAULT_BINS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrausSpec {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvolutionSpec {
    Cat,
    Symplectic { matrix: SymplecticMatrix },
    Hamiltonian { symbol: SymbolSpec, t: f64 },
}

impl EvolutionSpec {
    pub fn flow(&self) -> Result<FlowDescriptor> {
        match self {
            EvolutionSpec::Cat => Ok(FlowDescriptor::linear(SymplecticMatrix::cat())),
            EvolutionSpec::Symplectic { matrix } => Ok(FlowDescriptor::linear(*matrix)),
            EvolutionSpec::Hamiltonian { symbol, t } => FlowDescriptor::hamiltonian(symbol.symbol(), *t),
        }
    }

    pub fn is_metaplectic(&self) -> bool {
        !matches!(self, EvolutionSpec::Hamiltonian { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// `cos 2πx + cos 2πξ`.
    CosSum,
    Terms { terms: Vec<FourierTerm> },
}

/// One coefficient `â(k, m)` of `Σ â(k, m) e^{2πi(kx + mξ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: i64,
    pub m: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl SymbolSpec {
    pub fn symbol(&self) -> Symbol {
        match self {
            SymbolSpec::CosSum => Symbol::cos_sum(),
            SymbolSpec::Terms { terms } => Symbol::from_coeffs(terms.iter().map(|t| ((t.k, t.m), c64::new(t.re, t.im)))),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut sizes = vec![self.n];
        if let Some(list) = &self.n_list {
            if list.is_empty() {
                return Err(Error::Config("n_list must not be empty".into()));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("n_list must be strictly ascending".into()));
            }
            sizes.extend(list);
        }
        for &n in &sizes {
            let grid = GridSize::new(n)?;
            if self.evolution.is_metaplectic() || self.matrices.is_some() {
                grid.require_even()?;
            }
        }
        if self.trials < 1 || self.n_steps < 1 {
            return Err(Error::Config("trials and n_steps must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if let EvolutionSpec::Hamiltonian { symbol, t } = &self.evolution {
            if !symbol.symbol().is_real() {
                return Err(Error::NonRealSymbol);
            }
            if !t.is_finite() {
                return Err(Error::Config("evolution time t must be finite".into()));
            }
        }
        if !(self.kraus.sigma > 0.0 && self.kraus.sigma.is_finite()) {
            return Err(Error::Config(format!("kraus sigma must be positive, got {}", self.kraus.sigma)));
        }
        self.state.validate()
    }

    /// The experiment on grid `n` (the configured `n` when `None`).
    pub fn experiment_config(&self, n: Option<usize>) -> Result<ExperimentConfig> {
        self.validate()?;
        let grid = GridSize::new(n.unwrap_or(self.n))?;
        if self.evolution.is_metaplectic() {
            grid.require_even()?;
        }
        Ok(ExperimentConfig {
            grid,
            initial: self.state,
            kraus: KrausFamily::wrapped_gaussian(self.kraus.sigma)?,
            flow: self.evolution.flow()?,
            n_steps: self.n_steps,
            trials: self.trials,
            seed: self.seed,
        })
    }

    /// Grid sizes for a sweep: `n_list`, or just `n`.
    pub fn sweep_sizes(&self) -> Vec<usize> {
        self.n_list.clone().unwrap_or_else(|| vec![self.n])
    }
}
