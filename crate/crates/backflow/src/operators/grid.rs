use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mpcore::{Ball, Real};
use crate::Error;

/// Bits used to certify ordering and nonzeroness of grid times.
const CHECK_BITS: u32 = 256;

/// Strictly increasing, nonzero times `t_1 < … < t_{2M}`; interval `k`
/// is `[t_{2k−1}, t_{2k}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Real>", into = "Vec<Real>")]
pub struct TimeGrid {
    times: Vec<Real>,
}

impl TimeGrid {
    pub fn new(times: Vec<Real>) -> Result<Self, Error> {
        if times.len() < 2 || times.len() % 2 != 0 {
            return Err(Error::Domain(format!(
                "a time grid needs an even number (≥ 2) of times, got {}",
                times.len()
            )));
        }
        let balls: Vec<Ball> = times.iter().map(|t| t.ball(CHECK_BITS)).collect();
        for (t, b) in times.iter().zip(&balls) {
            if t.is_zero() || b.contains_zero() {
                return Err(Error::Domain(format!(
                    "time {t} is zero; translate the grid away from 0 (the spectrum is translation invariant)"
                )));
            }
        }
        for (i, w) in balls.windows(2).enumerate() {
            if !w[1].sub(&w[0]).is_positive() {
                return Err(Error::Domain(format!(
                    "times must be strictly increasing ({} ≥ {})",
                    times[i],
                    times[i + 1]
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[Real] {
        &self.times
    }

    /// Number of intervals `M`.
    pub fn m(&self) -> usize {
        self.times.len() / 2
    }

    /// The intervals `(t_{2k−1}, t_{2k})`.
    pub fn intervals(&self) -> impl Iterator<Item = (&Real, &Real)> {
        self.times.chunks(2).map(|c| (&c[0], &c[1]))
    }

    /// True if the grid is symmetric about 0, which makes the backflow matrix real.
    pub fn is_symmetric(&self) -> bool {
        let n = self.times.len();
        (0..n).all(|i| {
            let (a, b) = (&self.times[i], &self.times[n - 1 - i]);
            match a.checked_add(b) {
                Some(s) => s.is_zero(),
                // inexact forms: fall back to a tight enclosure test
                None => a.ball(CHECK_BITS).add(&b.ball(CHECK_BITS)).abs_upper()
                    < rug::Float::with_val(64, rug::Float::i_exp(1, -(CHECK_BITS as i32) + 8)),
            }
        })
    }

    /// Translate every time by `c`; fails if the result hits 0.
    pub fn translate(&self, c: &Real) -> Result<TimeGrid, Error> {
        let times = self
            .times
            .iter()
            .map(|t| {
                t.checked_add(c).ok_or_else(|| {
                    Error::Domain(format!("cannot translate {t} by {c} exactly"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        TimeGrid::new(times)
    }

    /// Canonical text form `t1,t2,…`.
    pub fn canonical(&self) -> String {
        self.times
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Stable 16-hex-digit digest of the canonical form.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.canonical().as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for TimeGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let times = s
            .split(',')
            .map(|t| t.trim().parse::<Real>())
            .collect::<Result<Vec<_>, _>>()?;
        TimeGrid::new(times)
    }
}

impl TryFrom<Vec<Real>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<Real>) -> Result<Self, Error> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<Real> {
    fn from(g: TimeGrid) -> Self {
        g.times
    }
}

/// Successive ratios of successive differences, `(t_{i+2}−t_{i+1})/(t_{i+1}−t_i)`.
pub fn srsd(grid: &TimeGrid) -> Vec<f64> {
    let t: Vec<Ball> = grid.times.iter().map(|t| t.ball(128)).collect();
    let d: Vec<Ball> = t.windows(2).map(|w| w[1].sub(&w[0])).collect();
    d.windows(2)
        .map(|w| w[1].div(&w[0]).expect("differences are positive").to_f64())
        .collect()
}

/// `⟨−T(2M−1)/2, …, −T/2, T/2, …, T(2M−1)/2⟩`.
pub fn equal_spacing_grid(m: usize, t: &Real) -> Result<TimeGrid, Error> {
    if m == 0 {
        return Err(Error::Domain("M must be at least 1".into()));
    }
    if !t.ball(64).is_positive() {
        return Err(Error::Domain(format!("spacing T must be positive, got {t}")));
    }
    let m = m as i64;
    let times = (0..2 * m)
        .map(|k| {
            t.checked_mul_ratio(2 * k - 2 * m + 1, 2)
                .ok_or_else(|| Error::Domain(format!("spacing {t} is not representable exactly")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    TimeGrid::new(times)
}
