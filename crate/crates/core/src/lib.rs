//! Determinant lines, eta invariants and adiabatic transport for
//! one-dimensional Dirac-type operators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aps;
pub mod corpus;
pub mod error;
pub mod etainv;
pub mod glines;
pub mod glue;
pub mod linalg;
pub mod model;
pub mod par;
pub mod special;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
