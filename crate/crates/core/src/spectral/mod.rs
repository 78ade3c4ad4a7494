//! Grids, potentials, the discretized Hamiltonian and its functional calculus.

pub mod cutoff;
pub mod field;
pub mod fourier;
pub mod grid;
pub mod littlewood_paley;
pub mod operator;

pub use field::SpectralField;
pub use fourier::Fourier;
pub use grid::{Grid1D, PotentialKind, PotentialSpec};
pub use littlewood_paley::{
    apply_block, bernstein_ratio, covering_blocks, cross_localization_norm, lp_block, lp_low_block,
    sobolev_norm, square_function, Block, Flavor,
};
pub use operator::OperatorContext;
