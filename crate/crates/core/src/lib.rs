//! Prescribed-energy connecting orbits of `q'' = grad V(q)`.
//!
//! Orbits are computed by minimizing the constrained action
//! `J_c(q) = int 1/2 |q'|^2 + (V(q) - c) dt` over paths joining the two
//! components of `{V <= c}`, then classified (brake, homoclinic,
//! heteroclinic), extended to the whole line and verified independently.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod classify;
pub mod error;
pub mod lattice;
pub mod potential;
pub mod solve;
pub mod studies;
pub mod vecops;
pub mod verify;

pub use error::{Error, Result};
