//! Nonlinear potential theory on model domains: p-capacities of condensers,
//! special exhaustion functions, parabolic/hyperbolic type, energy growth
//! estimates and tract counting for solutions of p-Laplace type equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod cli;
pub mod domains;
pub mod energy;
pub mod error;
pub mod exhaustion;
pub mod minimize;
pub mod quad;
pub mod wtforms;

pub use error::{Error, Result};
