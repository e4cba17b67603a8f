//! Fourier analysis on the quantum hypercube (M_2)^{⊗n}: Pauli coefficient
//! algebra, dense spectral routines, the Ornstein-Uhlenbeck semigroup and its
//! relatives, random restrictions, and a registry of numerical inequality checks.

pub mod dense;
pub mod ensembles;
pub mod error;
pub mod hypercube;
pub mod pauli;
pub mod record;
pub mod restriction;
pub mod scaffold;
pub mod suite;

pub use dense::{DenseOperator, Interval};
pub use error::{Error, Result};
pub use pauli::{Observable, PauliIndex, Phase};
