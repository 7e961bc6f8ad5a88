//! Sparse signal recovery with sparse Bayesian learning driven by unitary
//! approximate message passing (UAMP-SBL).
//!
//! The crate covers problem generation ([`model`]), the generic UAMP engine
//! ([`uamp`]), the single-vector solvers ([`sbl`]), the multi-vector and
//! temporally correlated solvers ([`mmv`]), state evolution and fixed-point
//! analysis ([`analysis`]) and a config-driven benchmark harness ([`bench`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod error;
pub mod mmv;
pub mod model;
pub mod rng;
pub mod sbl;
pub mod uamp;

pub use error::{Error, Result};
pub use model::{MatrixKind, MatrixSpec, ProblemInstance, SignalSpec, TransformedModel};
pub use sbl::{RecoveryResult, SblConfig};
pub use uamp::{StopRule, Variant};
