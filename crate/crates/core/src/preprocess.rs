//! Input encoding for the learned optimizer and output rescaling.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Log-magnitude / sign encoding of one gradient coordinate.
///
/// For `|g| >= e^-p` this is `(ln|g| / p, sgn g)`; below the threshold it is
/// `(-1, e^p g)`. Both branches give `(-1, ±1)` at the threshold.
#[inline]
pub fn log_sign(g: f64, p: f64) -> [f64; 2] {
    let magnitude = g.abs();
    if magnitude >= libm::exp(-p) {
        [libm::log(magnitude) / p, sign(g)]
    } else {
        [-1.0, libm::exp(p) * g]
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Applies [`log_sign`] to every coordinate.
pub fn preprocess_gradient(grad: &[f64], p: f64) -> Result<Vec<[f64; 2]>> {
    assert!(p > 0.0, "preprocessing exponent must be positive");
    grad.iter()
        .enumerate()
        .map(|(coordinate, &value)| {
            if value.is_finite() {
                Ok(log_sign(value, p))
            } else {
                Err(Error::NonFiniteGradient { coordinate, value })
            }
        })
        .collect()
}

pub fn rescale_update(raw: &[f64], factor: f64) -> Vec<f64> {
    raw.iter().map(|v| v * factor).collect()
}

/// How a raw gradient coordinate is presented to the first LSTM layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputEncoding {
    /// One channel: the gradient times a constant.
    Raw { scale: f64 },
    /// Two channels from [`log_sign`].
    LogSign { p: f64 },
}

impl InputEncoding {
    pub const fn raw() -> Self {
        Self::Raw { scale: 1.0 }
    }

    pub const fn log_sign() -> Self {
        Self::LogSign { p: 10.0 }
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::Raw { .. } => 1,
            Self::LogSign { .. } => 2,
        }
    }

    /// Writes `channels()` values into `out`.
    #[inline]
    pub fn encode_into(&self, g: f64, out: &mut [f64]) {
        match *self {
            Self::Raw { scale } => out[0] = scale * g,
            Self::LogSign { p } => out[..2].copy_from_slice(&log_sign(g, p)),
        }
    }
}
