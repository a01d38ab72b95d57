#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Solver and sensitivity toolkit for delay differential equations with
//! state-dependent delays.

pub mod cli;
pub mod error;
pub mod estimate;
mod frames;
pub mod lag;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod sens1;
pub mod sens2;
pub mod solver;
pub mod trajectory;

pub use error::{Result, SddeError};
