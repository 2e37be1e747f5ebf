//! Single-pass PCA over insertion-only streams.
//!
//! The core pieces are a growth-checked Oja iteration that abstains when it
//! cannot certify its answer ([`oja`]), and a parallel grid over learning
//! rates that removes the need to know the right rate in advance ([`grid`]).

pub mod baselines;
pub mod error;
pub mod format;
pub mod generators;
pub mod grid;
pub mod harness;
pub mod la;
pub mod lemmas;
pub mod oja;

pub use error::{Error, Result};
pub use grid::{grid_run, GridDiagnostics, GridOutcome, RateGridState};
pub use la::{Prng, StreamMatrix, UnitVec};
pub use oja::{oja_run, OjaState, PcaResult};
