//! Numerical laboratory for bi-parameter dyadic analysis with accretive weights.
//!
//! Everything lives on the finest dyadic mesh of the unit torus, one mesh per
//! parameter. Functions are step functions on that mesh, so every integral in
//! this crate is an exact finite sum weighted by cell volume and every
//! identity between operators holds up to floating-point rounding only.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! front end and the acceptance harness live in the companion `bitb` crate.
//!
//! Module map, bottom-up:
//!
//! * [`dyadic_grid`]: cubes, shifted grids, goodness, relative positions.
//! * [`grid_function`]: step functions on one axis or on the product mesh.
//! * [`accretive`]: certified accretive weights.
//! * [`martingale`]: weighted expectations, differences, square and maximal functions.
//! * [`paraproduct`]: BMO surrogates, Carleson sequences, the three paraproducts,
//!   power-iteration norm estimates.
//! * [`hardy_atomic`]: stopping times and the atomic decomposition.
//! * [`operator_lab`]: discretised kernels and the bilinear-form diagnostics.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod accretive;
pub mod dyadic_grid;
mod error;
pub mod grid_function;
pub mod hardy_atomic;
pub mod martingale;
pub(crate) mod math;
pub mod operator_lab;
pub mod paraproduct;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
