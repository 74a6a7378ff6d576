//! Numerical core for anisotropic nonlocal operators in divergence form.
//!
//! Kernels are built from matrix fields, the semilinear Dirichlet problem is
//! solved by convex minimization on a P1 mesh, and the limits s -> 1 and
//! s -> 0 of the bilinear form can be measured against local targets.
#![cfg_attr(not(test), no_std)]
// NaN must fail the checks written as !(x > 0), and index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

extern crate alloc;

pub mod algebra;
pub mod assembly;
pub mod asymptotics;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spectral;

pub use algebra::{c_ns, eigh_sym, gamma, operator_norm, Dimension, Mat, Spectrum, SymMatrix};
pub use error::{Error, Result};
