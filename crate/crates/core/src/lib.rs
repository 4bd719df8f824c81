//! Quantum trajectories of repeatedly measured semiclassical particles on
//! the quantized torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus_ops`]: grids, Fourier-table symbols and their quantizations
//!   `Op_N(a)` on the `N`-dimensional space `H_N`.
//! * [`propagators`]: metaplectic operators of integer symplectic matrices,
//!   Hamiltonian propagators, the classical flows they quantize, Lyapunov
//!   exponents and Ehrenfest times.
//! * [`states`]: coherent and momentum-localised initial states, the
//!   wrapped-Gaussian Kraus family.
//! * [`trajectory`]: the sequential sampler for measured trajectories, the
//!   exact joint density used as an oracle, and the classical law.
//! * [`analysis`]: histograms, total-variation distances and the experiment
//!   drivers built on them.
//! * [`config`] and [`selfcheck`]: the declarative run description shared
//!   with the command-line driver, and the installation self-test.

pub mod analysis;
pub mod config;
mod error;
pub mod output;
pub mod propagators;
pub mod rng;
pub mod selfcheck;
pub mod states;
pub mod torus_ops;
pub mod trajectory;

pub use error::{Error, Result};
pub use faer::c64;
