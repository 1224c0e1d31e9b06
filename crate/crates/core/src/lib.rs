//! Block Krylov projection solver for large symmetric differential Riccati
//! and Lyapunov equations with low-rank data.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dm;
pub mod dre;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod rng;
pub mod sparse;
pub mod stepping;

pub use error::{Error, Result};
