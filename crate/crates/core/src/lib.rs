//! Approximate multicommodity flow via energy-coupled electrical flows.
//!
//! Layers, bottom up: [`graph`] and [`kvec`] hold instances, block vectors
//! and per-edge energy matrices; [`lapsolve`] solves the block Laplacian
//! systems; [`coupled`] turns potentials into minimum-energy flows;
//! [`capacitated`] runs multiplicative weights over edge saturations;
//! [`concurrent`] and [`weighted`] are the top-level solvers. [`refsolve`]
//! holds dense and brute-force reference answers, [`gen`] random instances.

pub mod capacitated;
pub mod concurrent;
pub mod coupled;
pub mod error;
pub mod gen;
pub mod graph;
pub mod kvec;
pub mod lapsolve;
pub mod refsolve;
pub mod weighted;

pub use error::{Error, ParseError, ParseErrorKind, Result};
