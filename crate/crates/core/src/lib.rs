//! Alpha-effect dynamo toolkit.
//!
//! Computes the alpha tensor of a periodic, mean-free, solenoidal velocity
//! field, selects unstable large-scale wavevectors, continues the growth rate
//! of the Bloch growing mode in the small parameter `epsilon`, and checks the
//! resulting modes against direct pseudo-spectral integration of the linear
//! induction equation and of the full nonlinear MHD system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha;
pub mod continuation;
pub mod error;
pub mod fft;
pub mod field;
pub mod gmres;
pub mod induction;
pub mod invariants;
pub mod linalg;
pub mod mhd;
pub mod par;

pub use error::{Error, Result};
