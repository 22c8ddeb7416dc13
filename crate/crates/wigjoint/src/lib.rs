//! Phase-space simulation of joint measurements of conjugate observables.
//!
//! The crate computes joint outcome statistics for simultaneous (and
//! sequential) pointer measurements of a conjugate pair `(Q, K)` with
//! `[Q, K] = i`, in rescaled units where the couplings and `hbar` are 1.
//! Three independent routes to the same statistics are provided and tested
//! against each other:
//!
//! 1. the product of quasi-characteristic functions,
//! 2. the phase-space convolution of Wigner functions,
//! 3. a brute-force Hilbert-space evolution of system plus pointers.
//!
//! On top of these sit moment/cumulant extraction, conditional (post-
//! measurement) states, a classical trajectory sampler, and a scenario
//! runner used by the `wigjoint` CLI.

pub mod conditional;
pub mod error;
pub mod fourier;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod joint;
pub mod oracle;
pub mod scenario;
pub mod state;
pub mod wigner;

pub use error::{Error, Result};
pub use fourier::C64;
pub use gaussian::{gaussian_wigner, DetectorPairState, DetectorRepr, GaussianState,
    MeasurementOrdering};
pub use grid::Grid;
pub use state::{cat_state, coherent_state, density_from_pure, fock_state, mix, DensityMatrix,
    PureState};
pub use wigner::{fourier_dual, inverse_wigner, quasi_characteristic, wigner_moments,
    wigner_transform, InverseWigner, MomentTable, QuasiCharacteristic, WignerFunction};
