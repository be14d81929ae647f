//! Exact regeneration quantities on finite-state chains with an atom.

pub mod autocov;
pub mod compound;
pub mod enumeration;
pub mod kernels;
pub mod model;
pub mod moments;

pub use autocov::{generalized_autocov, sigma2_from_series};
pub use compound::{compound_block_moment, compound_block_moment_exact, embedded_transition, EmbeddedChain};
pub use enumeration::{enumerate_block_moments, EnumeratedMoments};
pub use kernels::{
    fundamental_kernel, fundamental_kernel_series, invariant_measure, kernel_power, taboo_kernel,
    InvariantMeasure, KernelKind, KernelMatrix,
};
pub use model::{validate_atom, ChainFile, FiniteMarkovModel};
pub use moments::{
    block_mean_variance, block_moment, weighted_block_moment, AtomKernels, BlockMomentRequest, Start,
    TruncatedValue,
};
