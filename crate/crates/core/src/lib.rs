//! Symmetry-protected collective spin spectroscopy: Ramsey and lock-in
//! sequences on the Dicke manifold of `N` spin-1/2 particles.

pub mod error;
pub mod evolution;
pub mod hamiltonians;
pub mod lineshapes;
pub mod noise;
pub mod operators;
pub mod sequences;
pub mod spectrum;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
pub use operators::{CollectiveSpin, Operator, SpinSystem};
pub use states::{DensityMatrix, PureState};
