//! Sketched flexible Krylov solvers for large-scale linear least squares and
//! ill-posed inverse problems.
//!
//! The crate provides the solver family LSQR / LSMR / FLSQR / FLSMR and their
//! sketched variants sFLSQR / sFLSMR built on a flexible Golub-Kahan
//! factorization with a configurable orthogonalization window, randomized
//! sketching operators (Gaussian, CountSketch), low-rank basis truncation,
//! residual-bound diagnostics, and generators for synthetic, deblurring and
//! computed-tomography test problems.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod pgm;
pub mod problems;
pub mod sketch;
pub mod solvers;
pub mod truncate;

pub use error::{Error, Result};
