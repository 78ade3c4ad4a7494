//! Numerical laboratory for small ground states of the cubic NLS
//! `i psi_t + psi_xx = mu |psi|^2 psi + V psi` on a periodic 1-D grid.

pub mod critical_norms;
pub mod error;
pub mod evolution;
pub mod groundstate;
pub mod linalg;
pub mod modulation;
pub mod randomization;
pub mod rng;
pub mod runner;
pub mod scattering;
pub mod spectral;

pub use error::{LabError, Result};
pub use num_complex::Complex64 as C64;
