use rug::Float;
use serde::{Deserialize, Serialize};

use super::RealSequence;
use crate::Error;

/// Diagnostics of a Raabe–Duhamel pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RdReport {
    /// `(n, (n+1)(x_{n+2}−x_{n+1})/(x_{n+1}−x_n) − n)` wherever defined.
    pub condition: Vec<(u64, f64)>,
    /// Mean of the condition expression over the last quarter of the indices.
    pub tail_condition: Option<f64>,
    /// Indices whose denominator vanished.
    pub flagged: Vec<u64>,
}

impl RdReport {
    /// True when the tail of the condition expression is negative.
    pub fn condition_holds(&self) -> bool {
        self.tail_condition.is_some_and(|c| c < 0.0)
    }
}

/// `RD[x]_n = x_n − n(x_{n+1}−x_n)² / ((n+1)(x_{n+2}−x_{n+1}) − n(x_{n+1}−x_n))`.
///
/// A vanishing denominator flags `n`. If the numerator vanishes too (a
/// locally constant sequence) `x_n` is kept; otherwise the value is dropped,
/// and the output is the contiguous run after the last dropped index.
pub fn raabe_duhamel(x: &RealSequence) -> Result<(RealSequence, RdReport), Error> {
    if x.len() < 3 {
        return Err(Error::Domain("the Raabe–Duhamel transform needs at least three terms".into()));
    }
    let prec = x.prec();
    let v = x.values();
    let s = x.start_index();
    let mut out: Vec<Float> = Vec::new();
    let mut out_start = s;
    let mut condition = Vec::new();
    let mut flagged = Vec::new();
    for k in 0..v.len() - 2 {
        let n = s + k as u64;
        let d0 = Float::with_val(prec, &v[k + 1] - &v[k]);
        let d1 = Float::with_val(prec, &v[k + 2] - &v[k + 1]);
        if !d0.is_zero() {
            let c = Float::with_val(prec, &d1 * (n + 1)) / &d0 - n;
            condition.push((n, c.to_f64()));
        }
        let den = Float::with_val(prec, &d1 * (n + 1)) - Float::with_val(prec, &d0 * n);
        let num = Float::with_val(prec, d0.square_ref()) * n;
        if den.is_zero() {
            flagged.push(n);
            if num.is_zero() {
                out.push(v[k].clone());
            } else {
                out.clear();
                out_start = n + 1;
            }
            continue;
        }
        out.push(Float::with_val(prec, &v[k] - Float::with_val(prec, &num / &den)));
    }
    let tail_condition = if condition.is_empty() {
        None
    } else {
        let q = (condition.len() / 4).max(1);
        let tail = &condition[condition.len() - q..];
        Some(tail.iter().map(|c| c.1).sum::<f64>() / q as f64)
    };
    Ok((RealSequence::new(out_start, out)?, RdReport { condition, tail_condition, flagged }))
}
