#![no_std]
#![doc = include_str!("../README.md")]
// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algorithm;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod exploration;
pub mod geometry;
pub mod linalg;
pub mod projection;
pub mod rng;
pub mod verification;

pub use error::{Error, Result};
