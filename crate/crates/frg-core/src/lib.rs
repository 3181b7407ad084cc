//! Gaussian-process collocation for functional renormalization group flows.
//!
//! The crate reduces Wetterich and Wilson–Polchinski flows on a truncated
//! field space to a finite ODE system for the functional values at a fixed
//! ensemble of collocation fields. A kernel surrogate fitted to those values
//! supplies the functional Hessian (and gradient) that the flow needs.
//!
//! Modules:
//! - [`field`]: spectral bases, fields and random ensembles.
//! - [`gp`]: kernels, regularized Gram solves and surrogate derivatives.
//! - [`regulator`]: Litim and exponential spectral regulators.
//! - [`models`]: closed-form Gaussian solutions and bare φ⁴ actions.
//! - [`flow`]: collocated flow right-hand sides, the stepper, error metrics.
//! - [`lattice`]: LPA, GP predictor-projector, transfer matrix, observables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod flow;
pub mod gp;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod regulator;

pub use error::{Error, Result};
