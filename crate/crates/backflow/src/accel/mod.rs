//! Convergence acceleration for eigenvalue sequences: Richardson and
//! generalized Richardson extrapolation, Kolmogorov–Zurbenko smoothing,
//! the Raabe–Duhamel transform, and power-law exponent diagnostics.
//!
//! Outputs are estimates of limits, not certified bounds.

mod fit;
mod kz;
mod rd;
mod richardson;

pub use fit::{exponent_fit, ExponentFit};
pub use kz::kz_filter;
pub use rd::{raabe_duhamel, RdReport};
pub use richardson::{generalized_richardson, ladder_weights, richardson, PowerLadder};

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::mpcore::{float_to_decimal, Real};
use crate::Error;

/// A finite sequence `x_n` for `n = start_index, start_index + 1, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSequence {
    start_index: u64,
    values: Vec<Float>,
}

impl RealSequence {
    pub fn new(start_index: u64, values: Vec<Float>) -> Result<Self, Error> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sequence value at index {} is not finite", start_index + k as u64)));
        }
        Ok(RealSequence { start_index, values })
    }

    /// Sequence of `f64` values widened to `prec` bits.
    pub fn from_f64(start_index: u64, values: &[f64], prec: u32) -> Result<Self, Error> {
        RealSequence::new(start_index, values.iter().map(|&v| Float::with_val(prec, v)).collect())
    }

    /// Parse full-precision decimal strings at `prec` bits.
    pub fn from_decimals<S: AsRef<str>>(start_index: u64, values: &[S], prec: u32) -> Result<Self, Error> {
        let vals = values
            .iter()
            .map(|s| {
                Float::parse(s.as_ref().trim())
                    .map(|p| Float::with_val(prec, p))
                    .map_err(|e| Error::Parse(format!("{}: {e}", s.as_ref())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        RealSequence::new(start_index, vals)
    }

    pub fn start_index(&self) -> u64 {
        self.start_index
    }

    /// Index of the last value (`start_index − 1` when empty).
    pub fn end_index(&self) -> i64 {
        self.start_index as i64 + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Float] {
        &self.values
    }

    /// `x_n`, if `n` is in range.
    pub fn get(&self, n: u64) -> Option<&Float> {
        n.checked_sub(self.start_index).and_then(|k| self.values.get(k as usize))
    }

    pub fn last(&self) -> Option<&Float> {
        self.values.last()
    }

    /// Working precision: the largest precision among the values.
    pub fn prec(&self) -> u32 {
        self.values.iter().map(|v| v.prec()).max().unwrap_or(64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Float)> {
        self.values.iter().enumerate().map(move |(k, v)| (self.start_index + k as u64, v))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64()).collect()
    }

    /// The subsequence with indices in `lo..=hi` (clamped).
    pub fn slice(&self, lo: u64, hi: u64) -> RealSequence {
        let lo = lo.max(self.start_index);
        let hi = (hi as i64).min(self.end_index());
        if (lo as i64) > hi {
            return RealSequence { start_index: lo, values: Vec::new() };
        }
        let a = (lo - self.start_index) as usize;
        let b = (hi - self.start_index as i64) as usize;
        RealSequence { start_index: lo, values: self.values[a..=b].to_vec() }
    }

    /// `(index, decimal)` pairs with `digits` significant digits.
    pub fn to_decimals(&self, digits: usize) -> Vec<(u64, String)> {
        self.iter().map(|(n, v)| (n, float_to_decimal(v, digits))).collect()
    }
}

/// Serializable form for manifests and CLI output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub start_index: u64,
    pub values: Vec<String>,
}

impl From<&RealSequence> for SequenceRecord {
    fn from(s: &RealSequence) -> Self {
        let digits = crate::mpcore::bits_to_digits(s.prec()) as usize;
        SequenceRecord { start_index: s.start_index, values: s.to_decimals(digits).into_iter().map(|p| p.1).collect() }
    }
}

/// A real exponent enclosed at `prec` bits from its shortest decimal form,
/// so that `0.1` means one tenth rather than the nearest double.
pub(crate) fn exponent(x: f64, prec: u32) -> Float {
    Real::from_f64(x).ball(prec).mid().clone()
}
