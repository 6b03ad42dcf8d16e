//! Functional time series forecasting of intraday return curves.

#![no_std]
// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod datagen;
pub mod error;
pub mod evalharness;
pub mod fpca;
pub mod gridcurves;
mod linalg;
pub mod math;
pub mod rng;
pub mod sieve;
pub mod updating;
pub mod varmodel;

pub use error::{Error, Result};
