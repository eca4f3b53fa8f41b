//! Finite-dimensional decoherent-histories engine.
//!
//! The crate computes decoherence functionals and history probabilities for
//! sets of alternative histories of a closed quantum system, builds
//! maximum-entropy effective density matrices from expected-value constraints,
//! runs second-law and classicality toy experiments on small lattice models,
//! and checks the structural statements about fine-grained histories and
//! certainty numerically.
//!
//! Units: `ħ = 1` unless passed explicitly, Boltzmann's constant is 1 and
//! entropies are in nats.

pub mod error;
pub mod hilbert;
pub mod histories;
pub mod decoherence;
pub mod maxent;
pub mod models;
pub mod random;
pub mod runner;
pub mod theorems;

pub use error::{Error, Result};
pub use num_complex::Complex64;
