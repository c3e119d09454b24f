//! Midpoint–radius ("ball") arithmetic over MPFR floats.
//!
//! A [`Ball`] `m ± r` encloses a real number; every operation returns a ball
//! that encloses all results of applying the exact operation to members of the
//! inputs. Radii are kept as [`Mag`] values: short floats that are only ever
//! rounded upward, so they can represent bounds far below `f64::MIN_POSITIVE`.

use std::cmp::Ordering;
use std::fmt;

use rug::float::{Constant, Round, Special};
use rug::ops::AssignRound;
use rug::Float;

use crate::Error;

/// Precision (bits) of radius magnitudes.
pub const MAG_PREC: u32 = 40;

/// A nonnegative upper bound, rounded upward by every operation.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct Mag(Float);

fn up<T>(val: T) -> Float
where
    Float: AssignRound<T, Round = Round, Ordering = Ordering>,
{
    Float::with_val_round(MAG_PREC, val, Round::Up).0
}

fn down<T>(val: T) -> Float
where
    Float: AssignRound<T, Round = Round, Ordering = Ordering>,
{
    Float::with_val_round(MAG_PREC, val, Round::Down).0
}

impl Mag {
    pub fn zero() -> Self {
        Mag(Float::with_val(MAG_PREC, Special::Zero))
    }

    pub fn inf() -> Self {
        Mag(Float::with_val(MAG_PREC, Special::Infinity))
    }

    /// Upper bound on `|x|`.
    pub fn from_f64(x: f64) -> Self {
        Mag(up(x.abs()))
    }

    /// Upper bound on `|x|`.
    pub fn from_float(x: &Float) -> Self {
        Mag(up(&*x.as_abs()))
    }

    /// `2^e`.
    pub fn pow2(e: i32) -> Self {
        let mut f = Float::with_val(MAG_PREC, 1);
        f <<= e;
        Mag(f)
    }

    /// `10^(-d)` rounded up.
    pub fn pow10_neg(d: i64) -> Self {
        let ten = Float::with_val(MAG_PREC, 10);
        Mag(up(ten.pow_round_ref_i(-d)))
    }

    /// One unit in the last place of `x` (a bound on nearest-rounding error).
    pub fn ulp(x: &Float) -> Self {
        match x.get_exp() {
            Some(e) => Mag::pow2(e - x.prec() as i32),
            None => {
                if x.is_zero() {
                    Mag::zero()
                } else {
                    Mag::inf()
                }
            }
        }
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn add(&self, o: &Mag) -> Mag {
        Mag(up(&self.0 + &o.0))
    }

    pub fn mul(&self, o: &Mag) -> Mag {
        Mag(up(&self.0 * &o.0))
    }

    /// `self * |x|`, rounded up.
    pub fn mul_float(&self, x: &Float) -> Mag {
        if self.is_zero() {
            return Mag::zero();
        }
        Mag(up(&self.0 * &*x.as_abs()))
    }

    pub fn mul_f64(&self, x: f64) -> Mag {
        Mag(up(&self.0 * x.abs()))
    }

    /// `self / d` where `d` must be a lower bound of the true divisor.
    pub fn div_lower(&self, d: &Float) -> Mag {
        if self.is_zero() {
            return Mag::zero();
        }
        if d.cmp0() != Some(Ordering::Greater) {
            return Mag::inf();
        }
        Mag(up(&self.0 / d))
    }

    pub fn max(&self, o: &Mag) -> Mag {
        if self.0 >= o.0 {
            self.clone()
        } else {
            o.clone()
        }
    }

    /// Upper bound as `f64` (saturates at 0 for underflow, which is safe only
    /// for display; use [`Mag::log2`] for comparisons with tiny targets).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64_round(Round::Up)
    }

    /// Approximate base-2 logarithm; `-inf` for zero.
    pub fn log2(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        if !self.0.is_finite() {
            return f64::INFINITY;
        }
        let e = self.0.get_exp().unwrap_or(0) as f64;
        let m = Float::with_val(53, &self.0 >> self.0.get_exp().unwrap_or(0)).to_f64();
        e + m.log2()
    }

    pub fn log10(&self) -> f64 {
        self.log2() * std::f64::consts::LOG10_2
    }

    /// Decimal exponent `k` with `self ≤ 10^k`.
    pub fn decimal_exponent(&self) -> i64 {
        if self.is_zero() {
            return i64::MIN;
        }
        let mut k = self.log10().ceil() as i64;
        while self.0 > *Mag::pow10_neg(-k).as_float() {
            k += 1;
        }
        k
    }
}

trait PowI {
    fn pow_round_ref_i(&self, e: i64) -> Float;
}

impl PowI for Float {
    fn pow_round_ref_i(&self, e: i64) -> Float {
        let mut out = Float::new(MAG_PREC + 20);
        let e = e.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
        out.assign_round(rug::ops::Pow::pow(self, e), Round::Up);
        out
    }
}

impl fmt::Display for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_string_radix(10, Some(6)))
    }
}

/// Round `val` to nearest at `prec` bits, returning the value and a bound on
/// the rounding error.
pub(crate) fn rnd<T>(prec: u32, val: T) -> (Float, Mag)
where
    Float: AssignRound<T, Round = Round, Ordering = Ordering>,
{
    let (f, o) = Float::with_val_round(prec, val, Round::Nearest);
    let e = if o == Ordering::Equal {
        Mag::zero()
    } else {
        Mag::ulp(&f)
    };
    (f, e)
}

/// Convert decimal digits to working bits (without guard).
pub fn digits_to_bits(digits: u32) -> u32 {
    ((digits as f64) * std::f64::consts::LOG2_10).ceil() as u32
}

/// Convert bits to (floor) decimal digits.
pub fn bits_to_digits(bits: u32) -> u32 {
    ((bits as f64) * std::f64::consts::LOG10_2).floor() as u32
}

/// Real ball `mid ± rad`.
#[derive(Clone, Debug)]
pub struct Ball {
    mid: Float,
    rad: Mag,
}

impl Ball {
    pub fn new(mid: Float, rad: Mag) -> Self {
        Ball { mid, rad }
    }

    pub fn exact(mid: Float) -> Self {
        Ball {
            mid,
            rad: Mag::zero(),
        }
    }

    pub fn zero(prec: u32) -> Self {
        Ball::exact(Float::with_val(prec, Special::Zero))
    }

    pub fn one(prec: u32) -> Self {
        Ball::from_i64(1, prec)
    }

    pub fn from_i64(x: i64, prec: u32) -> Self {
        let (m, e) = rnd(prec, x);
        Ball { mid: m, rad: e }
    }

    pub fn from_f64(x: f64, prec: u32) -> Self {
        let (m, e) = rnd(prec, x);
        Ball { mid: m, rad: e }
    }

    /// `p / q` enclosed at `prec` bits.
    pub fn from_ratio(p: i64, q: i64, prec: u32) -> Self {
        assert!(q != 0, "zero denominator");
        let pf = Float::with_val(prec.max(64), p);
        let (m, e) = rnd(prec, &pf / q);
        Ball { mid: m, rad: e }
    }

    pub fn pi(prec: u32) -> Self {
        let (m, e) = rnd(prec, Constant::Pi);
        Ball { mid: m, rad: e }
    }

    /// Parse a decimal string (e.g. `"0.25"`, `"-1e-3"`).
    pub fn parse_decimal(s: &str, prec: u32) -> Result<Self, Error> {
        let p = Float::parse(s.trim()).map_err(|e| Error::Parse(format!("{s}: {e}")))?;
        let (m, e) = rnd(prec, p);
        Ok(Ball { mid: m, rad: e })
    }

    pub fn mid(&self) -> &Float {
        &self.mid
    }

    pub fn rad(&self) -> &Mag {
        &self.rad
    }

    pub fn prec(&self) -> u32 {
        self.mid.prec()
    }

    pub fn into_parts(self) -> (Float, Mag) {
        (self.mid, self.rad)
    }

    pub fn add_error(&mut self, e: &Mag) {
        self.rad = self.rad.add(e);
    }

    pub fn with_error(mut self, e: &Mag) -> Self {
        self.add_error(e);
        self
    }

    /// Change the midpoint precision (rounding error folded into the radius).
    pub fn set_prec(&self, prec: u32) -> Ball {
        let (m, e) = rnd(prec, &self.mid);
        Ball {
            mid: m,
            rad: self.rad.add(&e),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mid.is_finite() && self.rad.is_finite()
    }

    /// Lower endpoint, rounded down.
    pub fn lower(&self) -> Float {
        Float::with_val_round(self.prec() + 2, &self.mid - self.rad.as_float(), Round::Down).0
    }

    /// Upper endpoint, rounded up.
    pub fn upper(&self) -> Float {
        Float::with_val_round(self.prec() + 2, &self.mid + self.rad.as_float(), Round::Up).0
    }

    /// Upper bound on `|x|` for all members.
    pub fn abs_upper(&self) -> Float {
        up(Mag::from_float(&self.mid).add(&self.rad).0)
    }

    /// Lower bound on `|x|` for all members (zero if the ball contains 0).
    pub fn abs_lower(&self) -> Float {
        let d = down(&*self.mid.as_abs() - self.rad.as_float());
        if d.cmp0() == Some(Ordering::Greater) {
            d
        } else {
            Float::with_val(MAG_PREC, Special::Zero)
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.abs_lower().is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.lower().cmp0() == Some(Ordering::Greater)
    }

    pub fn is_negative(&self) -> bool {
        self.upper().cmp0() == Some(Ordering::Less)
    }

    /// True if `x` lies in the ball.
    pub fn contains_float(&self, x: &Float) -> bool {
        let d = up(Float::with_val(self.prec().max(x.prec()) + 2, &self.mid - x).abs());
        d <= *self.rad.as_float()
    }

    /// True if `o` is contained in `self`.
    pub fn contains(&self, o: &Ball) -> bool {
        let d = up(Float::with_val(self.prec().max(o.prec()) + 2, &self.mid - &o.mid).abs());
        let need = up(&d + o.rad.as_float());
        need <= *self.rad.as_float()
    }

    /// True if the two balls intersect.
    pub fn overlaps(&self, o: &Ball) -> bool {
        let d = down(Float::with_val(self.prec().max(o.prec()) + 2, &self.mid - &o.mid).abs());
        d <= *self.rad.add(&o.rad).as_float()
    }

    /// Relative radius `rad/|mid|` as log10 (−inf if exact).
    pub fn rel_log10(&self) -> f64 {
        if self.rad.is_zero() {
            return f64::NEG_INFINITY;
        }
        if self.mid.is_zero() {
            return f64::INFINITY;
        }
        self.rad.log10() - Mag::from_float(&self.mid).log10()
    }

    pub fn to_f64(&self) -> f64 {
        self.mid.to_f64()
    }

    /// Midpoint as a decimal string with `digits` significant digits.
    pub fn mid_decimal(&self, digits: usize) -> String {
        float_to_decimal(&self.mid, digits)
    }

    pub fn neg(&self) -> Ball {
        Ball {
            mid: Float::with_val(self.prec(), -&self.mid),
            rad: self.rad.clone(),
        }
    }

    pub fn abs(&self) -> Ball {
        Ball {
            mid: Float::with_val(self.prec(), &*self.mid.as_abs()),
            rad: self.rad.clone(),
        }
    }

    pub fn add(&self, o: &Ball) -> Ball {
        let p = self.prec().max(o.prec());
        let (m, e) = rnd(p, &self.mid + &o.mid);
        Ball {
            mid: m,
            rad: self.rad.add(&o.rad).add(&e),
        }
    }

    pub fn sub(&self, o: &Ball) -> Ball {
        let p = self.prec().max(o.prec());
        let (m, e) = rnd(p, &self.mid - &o.mid);
        Ball {
            mid: m,
            rad: self.rad.add(&o.rad).add(&e),
        }
    }

    pub fn mul(&self, o: &Ball) -> Ball {
        let p = self.prec().max(o.prec());
        let (m, e) = rnd(p, &self.mid * &o.mid);
        let r = self
            .rad
            .mul_float(&o.mid)
            .add(&o.rad.mul_float(&self.mid))
            .add(&self.rad.mul(&o.rad))
            .add(&e);
        Ball { mid: m, rad: r }
    }

    pub fn mul_i64(&self, k: i64) -> Ball {
        let (m, e) = rnd(self.prec(), &self.mid * k);
        Ball {
            mid: m,
            rad: self.rad.mul_f64(k as f64).add(&e),
        }
    }

    pub fn add_i64(&self, k: i64) -> Ball {
        let (m, e) = rnd(self.prec(), &self.mid + k);
        Ball {
            mid: m,
            rad: self.rad.add(&e),
        }
    }

    pub fn div_i64(&self, k: i64) -> Ball {
        assert!(k != 0);
        let (m, e) = rnd(self.prec(), &self.mid / k);
        Ball {
            mid: m,
            rad: self.rad.div_lower(&Float::with_val(64, k.abs())).add(&e),
        }
    }

    /// Multiply by `2^k` (exact).
    pub fn mul_2exp(&self, k: i32) -> Ball {
        let mut m = self.mid.clone();
        m <<= k;
        let mut r = self.rad.0.clone();
        r <<= k;
        Ball { mid: m, rad: Mag(r) }
    }

    pub fn sqr(&self) -> Ball {
        let (m, e) = rnd(self.prec(), self.mid.square_ref());
        let r = self
            .rad
            .mul_float(&self.mid)
            .mul_f64(2.0)
            .add(&self.rad.mul(&self.rad))
            .add(&e);
        Ball { mid: m, rad: r }
    }

    pub fn recip(&self) -> Result<Ball, Error> {
        let one = Ball::one(self.prec());
        one.div(self)
    }

    pub fn div(&self, o: &Ball) -> Result<Ball, Error> {
        let lo = o.abs_lower();
        if lo.is_zero() {
            return Err(Error::Domain("division by a ball containing zero".into()));
        }
        let p = self.prec().max(o.prec());
        let (m, e) = rnd(p, &self.mid / &o.mid);
        // |a/b - a0/b0| <= (|a0| rb + |b0| ra) / (|b0| (|b0| - rb))
        let num = o.rad.mul_float(&self.mid).add(&self.rad.mul_float(&o.mid));
        let den = down(&*o.mid.as_abs() * &lo);
        let r = num.div_lower(&den).add(&e);
        Ok(Ball { mid: m, rad: r })
    }

    pub fn sqrt(&self) -> Result<Ball, Error> {
        if self.is_negative() {
            return Err(Error::Domain("square root of a negative ball".into()));
        }
        let (m, e) = rnd(self.prec(), self.mid.sqrt_ref());
        if self.rad.is_zero() {
            return Ok(Ball { mid: m, rad: e });
        }
        let lo = self.lower();
        let r = if lo.cmp0() == Some(Ordering::Greater) {
            // |sqrt(x) - sqrt(x0)| <= r / (sqrt(x0 - r) + sqrt(x0))
            let s = down(lo.sqrt());
            let s0 = down(self.mid.sqrt_ref());
            self.rad.div_lower(&down(&s + &s0))
        } else {
            // ball reaches 0: sqrt(x0 + r) bounds everything
            Mag(up(self.upper().sqrt()))
        };
        Ok(Ball {
            mid: m,
            rad: r.add(&e),
        })
    }

    pub fn exp(&self) -> Ball {
        let (m, e) = rnd(self.prec(), self.mid.exp_ref());
        if self.rad.is_zero() {
            return Ball { mid: m, rad: e };
        }
        // |e^x - e^x0| <= e^(x0 + r) * r
        let hi = up(self.upper().exp());
        let r = self.rad.mul_float(&hi);
        Ball {
            mid: m,
            rad: r.add(&e),
        }
    }

    pub fn ln(&self) -> Result<Ball, Error> {
        if !self.is_positive() {
            return Err(Error::Domain("logarithm of a nonpositive ball".into()));
        }
        let (m, e) = rnd(self.prec(), self.mid.ln_ref());
        let r = self.rad.div_lower(&down(self.lower()));
        Ok(Ball {
            mid: m,
            rad: r.add(&e),
        })
    }

    /// `self^y = exp(y ln self)` for positive `self`.
    pub fn pow(&self, y: &Ball) -> Result<Ball, Error> {
        Ok(y.mul(&self.ln()?).exp())
    }

    pub fn powi(&self, k: i64) -> Result<Ball, Error> {
        if k == 0 {
            return Ok(Ball::one(self.prec()));
        }
        let mut base = if k < 0 { self.recip()? } else { self.clone() };
        let mut k = k.unsigned_abs();
        let mut acc = Ball::one(self.prec());
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.sqr();
            }
        }
        Ok(acc)
    }

    pub fn sin(&self) -> Ball {
        let (m, e) = rnd(self.prec(), self.mid.sin_ref());
        Ball {
            mid: m,
            rad: self.rad.add(&e),
        }
    }

    pub fn cos(&self) -> Ball {
        let (m, e) = rnd(self.prec(), self.mid.cos_ref());
        Ball {
            mid: m,
            rad: self.rad.add(&e),
        }
    }

    pub fn atan(&self) -> Ball {
        let (m, e) = rnd(self.prec(), self.mid.atan_ref());
        Ball {
            mid: m,
            rad: self.rad.add(&e),
        }
    }

    /// Hull of two balls.
    pub fn union(&self, o: &Ball) -> Ball {
        let p = self.prec().max(o.prec());
        let lo = if self.lower() < o.lower() { self.lower() } else { o.lower() };
        let hi = if self.upper() > o.upper() { self.upper() } else { o.upper() };
        let (m, e) = rnd(p, Float::with_val(p + 2, &lo + &hi) / 2u32);
        let w = up(Float::with_val(p + 2, &hi - &lo) / 2u32);
        Ball {
            mid: m,
            rad: Mag(w).add(&e),
        }
    }
}

/// Format a float with `digits` significant decimal digits in scientific
/// notation (`-1.2345e-3` style) that round-trips through `Float::parse`.
pub fn float_to_decimal(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x.is_sign_negative() { "-inf".into() } else { "inf".into() };
    }
    let s = x.to_string_radix(10, Some(digits.max(1)));
    normalize_decimal(&s)
}

fn normalize_decimal(s: &str) -> String {
    // rug produces e.g. "1.2500000e-1" or "3.1415"; keep as-is but strip a
    // redundant "e0".
    s.strip_suffix("e0").map(str::to_string).unwrap_or_else(|| s.to_string())
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = f.precision().unwrap_or(20);
        write!(f, "[{} +/- {}]", float_to_decimal(&self.mid, d), self.rad)
    }
}

/// Complex ball `re + i im` with independent real and imaginary radii.
#[derive(Clone, Debug)]
pub struct CBall {
    pub re: Ball,
    pub im: Ball,
}

impl CBall {
    pub fn new(re: Ball, im: Ball) -> Self {
        CBall { re, im }
    }

    pub fn from_real(re: Ball) -> Self {
        let p = re.prec();
        CBall {
            re,
            im: Ball::zero(p),
        }
    }

    pub fn zero(prec: u32) -> Self {
        CBall::from_real(Ball::zero(prec))
    }

    pub fn one(prec: u32) -> Self {
        CBall::from_real(Ball::one(prec))
    }

    pub fn i(prec: u32) -> Self {
        CBall::new(Ball::zero(prec), Ball::one(prec))
    }

    pub fn prec(&self) -> u32 {
        self.re.prec().max(self.im.prec())
    }

    /// Largest of the two component radii.
    pub fn rad(&self) -> Mag {
        self.re.rad().max(self.im.rad())
    }

    /// Bound on `|z - mid|` (Euclidean).
    pub fn rad_abs(&self) -> Mag {
        self.re.rad().add(self.im.rad())
    }

    pub fn add_error(&mut self, e: &Mag) {
        self.re.add_error(e);
        self.im.add_error(e);
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(&self) -> CBall {
        CBall::new(self.re.clone(), self.im.neg())
    }

    pub fn neg(&self) -> CBall {
        CBall::new(self.re.neg(), self.im.neg())
    }

    pub fn add(&self, o: &CBall) -> CBall {
        CBall::new(self.re.add(&o.re), self.im.add(&o.im))
    }

    pub fn sub(&self, o: &CBall) -> CBall {
        CBall::new(self.re.sub(&o.re), self.im.sub(&o.im))
    }

    pub fn mul(&self, o: &CBall) -> CBall {
        let re = self.re.mul(&o.re).sub(&self.im.mul(&o.im));
        let im = self.re.mul(&o.im).add(&self.im.mul(&o.re));
        CBall::new(re, im)
    }

    pub fn mul_real(&self, o: &Ball) -> CBall {
        CBall::new(self.re.mul(o), self.im.mul(o))
    }

    pub fn mul_i64(&self, k: i64) -> CBall {
        CBall::new(self.re.mul_i64(k), self.im.mul_i64(k))
    }

    pub fn div_i64(&self, k: i64) -> CBall {
        CBall::new(self.re.div_i64(k), self.im.div_i64(k))
    }

    /// Multiply by `i`.
    pub fn mul_i(&self) -> CBall {
        CBall::new(self.im.neg(), self.re.clone())
    }

    pub fn sqr(&self) -> CBall {
        let re = self.re.sqr().sub(&self.im.sqr());
        let im = self.re.mul(&self.im).mul_2exp(1);
        CBall::new(re, im)
    }

    /// `|z|²`.
    pub fn norm_sqr(&self) -> Ball {
        self.re.sqr().add(&self.im.sqr())
    }

    pub fn abs(&self) -> Ball {
        // sqrt of a nonnegative quantity; clamp a straddling lower end
        let n = self.norm_sqr();
        match n.sqrt() {
            Ok(v) => v,
            Err(_) => Ball::zero(self.prec()),
        }
    }

    /// Upper bound on `|z|` over the ball.
    pub fn abs_upper(&self) -> Float {
        let r = self.re.abs_upper();
        let i = self.im.abs_upper();
        up((r.square() + i.square()).sqrt())
    }

    /// Lower bound on `|z|` over the ball.
    pub fn abs_lower(&self) -> Float {
        let r = self.re.abs_lower();
        let i = self.im.abs_lower();
        down((r.square() + i.square()).sqrt())
    }

    pub fn recip(&self) -> Result<CBall, Error> {
        let n = self.norm_sqr();
        let c = self.conj();
        Ok(CBall::new(c.re.div(&n)?, c.im.div(&n)?))
    }

    pub fn div(&self, o: &CBall) -> Result<CBall, Error> {
        let n = o.norm_sqr();
        let t = self.mul(&o.conj());
        Ok(CBall::new(t.re.div(&n)?, t.im.div(&n)?))
    }

    pub fn div_real(&self, o: &Ball) -> Result<CBall, Error> {
        Ok(CBall::new(self.re.div(o)?, self.im.div(o)?))
    }

    /// `e^z`.
    pub fn exp(&self) -> CBall {
        let m = self.re.exp();
        CBall::new(m.mul(&self.im.cos()), m.mul(&self.im.sin()))
    }

    /// `e^{iθ}` for real θ.
    pub fn expi(theta: &Ball) -> CBall {
        CBall::new(theta.cos(), theta.sin())
    }

    /// Principal argument in (−π, π]. Fails if the ball meets the branch cut
    /// (the closed negative real axis) or contains zero.
    pub fn arg(&self) -> Result<Ball, Error> {
        let lo = self.abs_lower();
        if lo.is_zero() {
            return Err(Error::Domain("argument of a ball containing zero".into()));
        }
        if !self.re.is_positive() && self.im.contains_zero() {
            return Err(Error::Branch(
                "complex ball meets the branch cut on the negative real axis".into(),
            ));
        }
        let p = self.prec();
        let (m, e) = rnd(p, self.im.mid().atan2_ref(self.re.mid()));
        // |Δarg| <= |Δz| / (|z| lower bound)
        let r = self.rad_abs().div_lower(&lo);
        Ok(Ball::new(m, r.add(&e)))
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Result<CBall, Error> {
        let arg = self.arg()?;
        let lnabs = self.norm_sqr().ln()?.mul_2exp(-1);
        Ok(CBall::new(lnabs, arg))
    }

    /// Principal power `z^w` for real `w` (cut on the negative real axis,
    /// real-positive for positive real `z`).
    pub fn pow_real(&self, w: &Ball) -> Result<CBall, Error> {
        if self.im.mid().is_zero() && self.im.rad().is_zero() && self.re.is_positive() {
            return Ok(CBall::from_real(self.re.pow(w)?));
        }
        Ok(self.ln()?.mul_real(w).exp())
    }

    pub fn powi(&self, k: u64) -> CBall {
        let mut base = self.clone();
        let mut k = k;
        let mut acc = CBall::one(self.prec());
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.sqr();
            }
        }
        acc
    }

    /// True if `o` is contained componentwise in `self`.
    pub fn contains(&self, o: &CBall) -> bool {
        self.re.contains(&o.re) && self.im.contains(&o.im)
    }

    pub fn overlaps(&self, o: &CBall) -> bool {
        self.re.overlaps(&o.re) && self.im.overlaps(&o.im)
    }

    /// log10 of the radius relative to `|mid|`.
    pub fn rel_log10(&self) -> f64 {
        let r = self.rad();
        if r.is_zero() {
            return f64::NEG_INFINITY;
        }
        let m = Mag::from_float(self.re.mid()).max(&Mag::from_float(self.im.mid()));
        if m.is_zero() {
            return f64::INFINITY;
        }
        r.log10() - m.log10()
    }

    pub fn to_c64(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

impl fmt::Display for CBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = f.precision().unwrap_or(20);
        write!(f, "{:.*} + i{:.*}", d, self.re, d, self.im)
    }
}
