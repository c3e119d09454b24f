//! Precision escalation: rerun a ball computation at doubled working
//! precision until the enclosure is tight enough.

use super::ball::{digits_to_bits, Ball, CBall};
use crate::Error;

fn schedule(digits: u32, ceiling_factor: u32) -> impl Iterator<Item = u32> {
    let start = digits_to_bits(digits) + 32;
    let stop = digits_to_bits(digits.saturating_mul(ceiling_factor.max(1))) + 32;
    let mut bits = start;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let b = bits.min(stop);
        if b >= stop {
            done = true;
        }
        bits = bits.saturating_mul(2);
        Some(b)
    })
}

/// Accept when the relative radius is at most `10^-digits`, or the absolute
/// radius is below `10^-(2·digits)` (values that are zero to working accuracy).
fn accept(rel_log10: f64, abs_log10: f64, digits: u32) -> bool {
    rel_log10 <= -(digits as f64) || abs_log10 <= -2.0 * digits as f64
}

pub fn real<F>(digits: u32, ceiling_factor: u32, mut f: F) -> Result<Ball, Error>
where
    F: FnMut(u32) -> Result<Ball, Error>,
{
    let mut last = None;
    for bits in schedule(digits, ceiling_factor) {
        match f(bits) {
            Ok(v) if v.is_finite() && accept(v.rel_log10(), v.rad().log10(), digits) => {
                return Ok(v)
            }
            Ok(v) => last = Some(v.rel_log10()),
            Err(Error::PrecisionExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::PrecisionExhausted {
        digits,
        achieved: last.map(|r| -r),
    })
}

pub fn complex<F>(digits: u32, ceiling_factor: u32, mut f: F) -> Result<CBall, Error>
where
    F: FnMut(u32) -> Result<CBall, Error>,
{
    let mut last = None;
    for bits in schedule(digits, ceiling_factor) {
        match f(bits) {
            Ok(v) if v.is_finite() && accept(v.rel_log10(), v.rad().log10(), digits) => {
                return Ok(v)
            }
            Ok(v) => last = Some(v.rel_log10()),
            Err(Error::PrecisionExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::PrecisionExhausted {
        digits,
        achieved: last.map(|r| -r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_doubles_to_ceiling() {
        let s: Vec<u32> = schedule(30, 16).collect();
        assert_eq!(s[0], digits_to_bits(30) + 32);
        assert_eq!(*s.last().unwrap(), digits_to_bits(480) + 32);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }
}
