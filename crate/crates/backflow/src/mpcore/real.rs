use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ball::{Ball, CBall};
use crate::Error;

/// An exactly specified real input that can be enclosed at any precision.
///
/// Parameters such as `a = 2M/π` are not dyadic, so they are carried
/// symbolically and re-enclosed whenever a computation escalates precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Real {
    /// `num / den · π^pi_pow`.
    Rational { num: i64, den: i64, pi_pow: i32 },
    /// A decimal literal, enclosed by correct rounding.
    Decimal(String),
}

impl Real {
    pub fn int(k: i64) -> Self {
        Real::Rational {
            num: k,
            den: 1,
            pi_pow: 0,
        }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Real::Rational {
            num,
            den,
            pi_pow: 0,
        }
        .normalized()
    }

    /// `num / (den π)`.
    pub fn ratio_over_pi(num: i64, den: i64) -> Self {
        Real::Rational {
            num,
            den,
            pi_pow: -1,
        }
        .normalized()
    }

    /// The shortest decimal literal that round-trips to `x`.
    pub fn from_f64(x: f64) -> Self {
        Real::Decimal(format!("{x:e}"))
    }

    fn normalized(self) -> Self {
        match self {
            Real::Rational { num, den, pi_pow } => {
                let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
                let s = if den < 0 { -1 } else { 1 };
                Real::Rational {
                    num: s * num / g,
                    den: s * den / g,
                    pi_pow,
                }
            }
            d => d,
        }
    }

    /// Enclosure at `bits` of precision.
    pub fn ball(&self, bits: u32) -> Ball {
        match self {
            Real::Rational { num, den, pi_pow } => {
                let q = Ball::from_ratio(*num, *den, bits);
                if *pi_pow == 0 {
                    q
                } else {
                    let p = Ball::pi(bits + 8)
                        .powi(*pi_pow as i64)
                        .expect("pi is nonzero");
                    q.mul(&p).set_prec(bits)
                }
            }
            Real::Decimal(s) => Ball::parse_decimal(s, bits).expect("validated on construction"),
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.ball(64).to_f64()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Rational { num, .. } => *num == 0,
            Real::Decimal(_) => self.ball(64).mid().is_zero(),
        }
    }

    /// `(num, den, pi_pow)` if the value is a rational multiple of a power of
    /// π with small numerator and denominator (decimals are converted).
    pub fn as_rational(&self) -> Option<(i64, i64, i32)> {
        match self {
            Real::Rational { num, den, pi_pow } => Some((*num, *den, *pi_pow)),
            Real::Decimal(s) => decimal_to_ratio(s).map(|(n, d)| (n, d, 0)),
        }
    }

    fn from_i128(num: i128, den: i128, pi_pow: i32) -> Option<Real> {
        let g = gcd(num.unsigned_abs() as u64, den.unsigned_abs() as u64).max(1) as i128;
        let (n, d) = (num / g, den / g);
        let s = if d < 0 { -1 } else { 1 };
        Some(Real::Rational {
            num: i64::try_from(s * n).ok()?,
            den: i64::try_from(s * d).ok()?,
            pi_pow,
        })
    }

    /// Exact sum when both operands are rational multiples of the same power
    /// of π.
    pub fn checked_add(&self, o: &Real) -> Option<Real> {
        let (n1, d1, p1) = self.as_rational()?;
        let (n2, d2, p2) = o.as_rational()?;
        if n1 == 0 {
            return Some(o.clone());
        }
        if n2 == 0 {
            return Some(self.clone());
        }
        if p1 != p2 {
            return None;
        }
        let num = n1 as i128 * d2 as i128 + n2 as i128 * d1 as i128;
        let den = d1 as i128 * d2 as i128;
        Real::from_i128(num, den, p1)
    }

    /// Exact product with the rational `p/q`.
    pub fn checked_mul_ratio(&self, p: i64, q: i64) -> Option<Real> {
        let (n, d, k) = self.as_rational()?;
        Real::from_i128(n as i128 * p as i128, d as i128 * q as i128, k)
    }

    pub fn neg(&self) -> Real {
        match self {
            Real::Rational { num, den, pi_pow } => Real::Rational {
                num: -num,
                den: *den,
                pi_pow: *pi_pow,
            },
            Real::Decimal(s) => {
                let t = s.trim();
                Real::Decimal(match t.strip_prefix('-') {
                    Some(r) => r.to_string(),
                    None => format!("-{t}"),
                })
            }
        }
    }
}

/// Parse a plain decimal literal into a small rational.
fn decimal_to_ratio(s: &str) -> Option<(i64, i64)> {
    let t = s.trim().to_ascii_lowercase();
    let (mant, exp) = match t.split_once('e') {
        Some((m, e)) => (m.to_string(), e.parse::<i32>().ok()?),
        None => (t.clone(), 0),
    };
    let neg = mant.starts_with('-');
    let mant = mant.trim_start_matches(['-', '+']);
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{ip}{fp}");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut num: i128 = digits.parse().ok()?;
    let mut e = exp - fp.len() as i32;
    let mut den: i128 = 1;
    while e > 0 {
        num = num.checked_mul(10)?;
        e -= 1;
    }
    while e < 0 {
        den = den.checked_mul(10)?;
        e += 1;
    }
    if neg {
        num = -num;
    }
    let g = gcd(num.unsigned_abs() as u64, den as u64).max(1) as i128;
    Some((i64::try_from(num / g).ok()?, i64::try_from(den / g).ok()?))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Rational { num, den, pi_pow } => {
                if *den == 1 {
                    write!(f, "{num}")?;
                } else {
                    write!(f, "{num}/{den}")?;
                }
                match *pi_pow {
                    0 => Ok(()),
                    1 => write!(f, "*pi"),
                    -1 => write!(f, "/pi"),
                    k if k > 0 => write!(f, "*pi^{k}"),
                    k => write!(f, "/pi^{}", -k),
                }
            }
            Real::Decimal(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Real {
    type Err = Error;

    /// Accepts decimal literals (`0.25`, `-1e-3`), rationals (`-1/4`) and
    /// rationals times a power of π (`2/pi`, `3*pi`, `1/2*pi^2`, `4/pi^2`).
    fn from_str(s: &str) -> Result<Self, Error> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err(Error::Parse("empty real literal".into()));
        }
        let (base, pi_pow) = split_pi(&t)?;
        if let Some((n, d)) = base.split_once('/') {
            let num: i64 = n.parse().map_err(|_| Error::Parse(format!("bad rational: {s}")))?;
            let den: i64 = d.parse().map_err(|_| Error::Parse(format!("bad rational: {s}")))?;
            if den == 0 {
                return Err(Error::Parse(format!("zero denominator: {s}")));
            }
            return Ok(Real::Rational { num, den, pi_pow }.normalized());
        }
        if let Ok(k) = base.parse::<i64>() {
            return Ok(Real::Rational {
                num: k,
                den: 1,
                pi_pow,
            });
        }
        if pi_pow != 0 {
            return Err(Error::Parse(format!("pi factors need a rational coefficient: {s}")));
        }
        rug::Float::parse(&base).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
        Ok(Real::Decimal(base))
    }
}

fn split_pi(t: &str) -> Result<(String, i32), Error> {
    let lower = t.to_ascii_lowercase();
    for (sep, sign) in [("*pi", 1), ("/pi", -1)] {
        if let Some(idx) = lower.find(sep) {
            let rest = &lower[idx + sep.len()..];
            let k: i32 = if rest.is_empty() {
                1
            } else if let Some(e) = rest.strip_prefix('^') {
                e.parse().map_err(|_| Error::Parse(format!("bad pi power: {t}")))?
            } else {
                return Err(Error::Parse(format!("unexpected text after pi: {t}")));
            };
            return Ok((t[..idx].to_string(), sign * k));
        }
    }
    if lower == "pi" {
        return Ok(("1".into(), 1));
    }
    Ok((t.to_string(), 0))
}

impl From<Real> for String {
    fn from(r: Real) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Real {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

/// A complex input with exactly specified parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Cplx {
    pub re: Real,
    pub im: Real,
}

impl Cplx {
    pub fn new(re: Real, im: Real) -> Self {
        Cplx { re, im }
    }

    pub fn real(re: Real) -> Self {
        Cplx { re, im: Real::int(0) }
    }

    pub fn ball(&self, bits: u32) -> CBall {
        CBall::new(self.re.ball(bits), self.im.ball(bits))
    }

    pub fn conj(&self) -> Cplx {
        Cplx::new(self.re.clone(), self.im.neg())
    }
}
