//! Limiting absorption, generalized plane waves, the distorted Fourier
//! transform and finite-time wave operators.
//!
//! In one dimension the scattered part of `e(x, xi)` does not decay, so the
//! plane waves are checked through the Helmholtz residual and the isometry
//! of the transform only.

pub mod lippmann;
pub mod resolvent;
pub mod transform;
pub mod wave;

pub use lippmann::{helmholtz_residual, plane_wave_table, solve_plane_wave, PlaneWave, PlaneWaveTable};
pub use resolvent::{resolvent_limit, ResolventLimit, ResolventOptions};
pub use transform::{
    build_transform, distorted_multiplier, indicator_sup_bound, DistortedTransform, Route, SplitPairs, TransformOptions,
};
pub use wave::{
    intertwining_residual, wave_operator_adjoint_apply, wave_operator_apply, wave_operator_fourier, WaveOperatorReport,
    WaveOptions,
};
