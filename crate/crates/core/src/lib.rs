//! Nonparametric kernel regression with null-recurrent regressors.
//!
//! The crate has two halves that check each other:
//!
//! - [`algebra`] computes regeneration-block quantities exactly on finite
//!   Markov chains with an atom `(s, ν)`: the taboo kernel `H = P − s⊗ν`,
//!   the fundamental kernel `G = Σ Hˡ`, the invariant measure `π_s = νG`,
//!   block moments of every order, generalized autocovariances and the
//!   embedded / compound formulas for independent product chains.
//! - [`split`], [`processes`], [`estimator`] and [`montecarlo`] simulate the
//!   same objects (split chains, random-walk cointegration systems) and run
//!   the kernel estimator `f̂(x) = Σ Z_t K_{x,h}(X_t) / Σ K_{x,h}(X_t)` inside
//!   replicated central-limit experiments.
//!
//! Everything is deterministic given a seed; replications are seeded through
//! [`montecarlo::replication_seed`] so serial and parallel runs agree.

pub mod algebra;
pub mod error;
pub mod estimator;
pub mod io;
pub mod montecarlo;
pub mod numeric;
pub mod processes;
pub mod split;

pub use error::{Error, Result};

/// Library version echoed into run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
