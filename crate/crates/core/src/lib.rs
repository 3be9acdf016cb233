//! Learned gradient-based optimizers.
//!
//! A small two-layer LSTM is applied coordinatewise to the gradient of an
//! optimizee and emits the parameter update. Its weights are trained by
//! backpropagating the summed optimizee loss through a truncated unroll of the
//! optimization, treating every optimizee gradient as a constant input.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line driver live in the `metaopt` companion crate.

#![no_std]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod baselines;
mod error;
pub mod lstm;
pub mod memory;
pub mod meta;
pub mod numerics;
pub mod optimizee;
pub mod preprocess;
pub mod rule;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream};
