//! Γ, 1/Γ, log Γ, and the beta functions on real and complex balls.

use std::cmp::Ordering;

use rug::float::Round;
use rug::Float;

use super::ball::{rnd, Ball, CBall, Mag};
use super::escalate;
use super::real::{Cplx, Real};
use crate::Error;

/// Upper bound on `|ψ|` over a positive interval `[lo, hi]` (ψ is increasing).
fn digamma_abs_bound(lo: &Float, hi: &Float) -> Mag {
    let a = Float::with_val(64, lo).digamma();
    let b = Float::with_val(64, hi).digamma();
    let m = if a.clone().abs() > b.clone().abs() { a.abs() } else { b.abs() };
    // 64-bit evaluation is accurate far beyond this safety margin
    Mag::from_float(&m).mul_f64(1.0 + 1e-12).add(&Mag::pow2(-60))
}

/// `log Γ(x)` for a ball of strictly positive reals.
pub fn lgamma_ball(x: &Ball) -> Result<Ball, Error> {
    if !x.is_positive() {
        return Err(Error::Domain(
            "log-gamma requires a strictly positive argument".into(),
        ));
    }
    let (m, e) = rnd(x.prec(), x.mid().ln_gamma_ref());
    let mut out = Ball::new(m, e);
    if !x.rad().is_zero() {
        out.add_error(&x.rad().mul(&digamma_abs_bound(&x.lower(), &x.upper())));
    }
    Ok(out)
}

/// Nearest integer to the midpoint, if the ball contains a nonpositive integer.
fn touches_pole(x: &Ball) -> Option<i64> {
    let lo = x.lower();
    if lo.cmp0() == Some(Ordering::Greater) {
        return None;
    }
    let k = Float::with_val(64, x.mid().round_ref()).to_f64() as i64;
    for c in [k - 1, k, k + 1] {
        if c <= 0 && x.contains_float(&Float::with_val(64, c)) {
            return Some(c);
        }
    }
    None
}

/// `Γ(x)`; fails if the ball contains a pole.
pub fn gamma_ball(x: &Ball) -> Result<Ball, Error> {
    if x.is_positive() {
        return Ok(lgamma_ball(x)?.exp());
    }
    if let Some(k) = touches_pole(x) {
        return Err(Error::Domain(format!("gamma pole at {k}")));
    }
    // reflection: Γ(x) = π / (sin(πx) Γ(1−x))
    let p = x.prec();
    let pi = Ball::pi(p);
    let s = pi.mul(x).sin();
    let g = gamma_ball(&Ball::one(p).sub(x))?;
    pi.div(&s.mul(&g))
}

/// `1/Γ(x)`, entire in `x` (zero at the poles of Γ).
pub fn rgamma_ball(x: &Ball) -> Result<Ball, Error> {
    if x.is_positive() {
        return Ok(lgamma_ball(x)?.neg().exp());
    }
    let p = x.prec();
    let pi = Ball::pi(p);
    let s = pi.mul(x).sin();
    let g = gamma_ball(&Ball::one(p).sub(x))?;
    s.mul(&g).div(&pi)
}

/// `B(x, y) = Γ(x)Γ(y)/Γ(x+y)`.
pub fn beta_ball(x: &Ball, y: &Ball) -> Result<Ball, Error> {
    let s = x.add(y);
    if x.is_positive() && y.is_positive() {
        let l = lgamma_ball(x)?.add(&lgamma_ball(y)?).sub(&lgamma_ball(&s)?);
        return Ok(l.exp());
    }
    Ok(gamma_ball(x)?.mul(&gamma_ball(y)?).mul(&rgamma_ball(&s)?))
}

/// `B_diag(x) = B(x, x) = Γ(x)²/Γ(2x)`.
pub fn beta_diag_ball(x: &Ball) -> Result<Ball, Error> {
    beta_ball(x, x)
}

/// Bernoulli number `B_{2k}` as a ball.
fn bernoulli_even(k: u32, prec: u32) -> Ball {
    // B_{2k} = (−1)^{k+1} 2 (2k)! ζ(2k) / (2π)^{2k}
    let p = prec + 16;
    let (f, ef) = rnd(p, Float::factorial(2 * k));
    let (z, ez) = rnd(p, Float::zeta_u(2 * k));
    let fact = Ball::new(f, ef);
    let zeta = Ball::new(z, ez);
    let twopi = Ball::pi(p).mul_2exp(1);
    let den = twopi.powi(2 * k as i64).expect("nonzero");
    let v = fact.mul(&zeta).mul_2exp(1).div(&den).expect("nonzero");
    if k % 2 == 1 {
        v.set_prec(prec)
    } else {
        v.neg().set_prec(prec)
    }
}

/// `log Γ(w)` by the Stirling series, for `Re w` large (caller shifts).
fn stirling_cball(w: &CBall) -> Result<CBall, Error> {
    let p = w.prec();
    let half = Ball::from_ratio(1, 2, p);
    let lnw = w.ln()?;
    let ln2pi = Ball::pi(p).mul_2exp(1).ln()?.mul_2exp(-1);
    let mut s = w
        .sub(&CBall::from_real(half))
        .mul(&lnw)
        .sub(w)
        .add(&CBall::from_real(ln2pi));
    let winv = w.recip()?;
    let winv2 = winv.sqr();
    let mut wpow = winv.clone(); // w^{-(2k-1)}
    let absw = w.abs_lower();
    let target = Mag::pow2(-(p as i32) - 4);
    // sec^{2K}(ph w / 2) factor: ph is small after shifting, bound cos(ph/2) from below
    let cosh = {
        let re_lo = w.re.lower();
        let c = Float::with_val(64, &re_lo / &w.abs_upper());
        let half_angle_cos_sq = Float::with_val_round(64, (c + 1u32) / 2u32, Round::Down).0;
        half_angle_cos_sq
    };
    let mut k = 1u32;
    loop {
        let b = bernoulli_even(k, p);
        let denom = (2 * k as i64) * (2 * k as i64 - 1);
        // remainder after terms 1..k-1 bounded by first neglected term times sec^{2k}
        let bound_mag = Mag::from_float(&b.abs_upper())
            .div_lower(&Float::with_val(64, denom))
            .div_lower(&Float::with_val_round(64, rug::ops::Pow::pow(absw.clone(), 2 * k - 1), Round::Down).0)
            .div_lower(&Float::with_val_round(64, rug::ops::Pow::pow(cosh.clone(), k), Round::Down).0);
        if bound_mag <= target || k > 4 * p {
            s.add_error(&bound_mag);
            break;
        }
        let term = wpow.mul_real(&b).div_i64(denom);
        s = s.add(&term);
        wpow = wpow.mul(&winv2);
        k += 1;
    }
    Ok(s)
}

/// `Γ(z)` for a complex ball.
pub fn gamma_cball(z: &CBall) -> Result<CBall, Error> {
    let p = z.prec();
    if z.im.mid().is_zero() && z.im.rad().is_zero() {
        return Ok(CBall::from_real(gamma_ball(&z.re)?));
    }
    let half = Float::with_val(64, 0.5);
    if *z.re.mid() < half {
        // reflection Γ(z) = π / (sin(πz) Γ(1−z))
        let pi = Ball::pi(p);
        let piz = z.mul_real(&pi);
        let iz = piz.mul_i();
        let s = iz.exp().sub(&iz.neg().exp()).div(&CBall::i(p).mul_i64(2))?;
        let g = gamma_cball(&CBall::one(p).sub(z))?;
        return CBall::from_real(pi).div(&s.mul(&g));
    }
    let r = (0.15 * p as f64 + 12.0).ceil();
    let re = z.re.mid().to_f64();
    let shift = if re < r { (r - re).ceil() as i64 } else { 0 };
    let w = z.add(&CBall::from_real(Ball::from_i64(shift, p)));
    let lg = stirling_cball(&w)?;
    let mut prod = CBall::one(p);
    for k in 0..shift {
        prod = prod.mul(&z.add(&CBall::from_real(Ball::from_i64(k, p))));
    }
    lg.exp().div(&prod)
}

/// Certified `Γ(x)` to `digits` relative digits.
pub fn gamma(x: &Real, digits: u32) -> Result<Ball, Error> {
    escalate::real(digits, 16, |bits| gamma_ball(&x.ball(bits)))
}

/// Certified `Γ(z)` for complex `z`.
pub fn gamma_complex(z: &Cplx, digits: u32) -> Result<CBall, Error> {
    escalate::complex(digits, 16, |bits| gamma_cball(&z.ball(bits)))
}

/// Certified `B(x, y)`.
pub fn beta(x: &Real, y: &Real, digits: u32) -> Result<Ball, Error> {
    escalate::real(digits, 16, |bits| beta_ball(&x.ball(bits), &y.ball(bits)))
}

/// Certified `B_diag(x) = B(x, x)`.
pub fn beta_diag(x: &Real, digits: u32) -> Result<Ball, Error> {
    escalate::real(digits, 16, |bits| beta_diag_ball(&x.ball(bits)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_is_sqrt_pi() {
        let g = gamma(&Real::ratio(1, 2), 50).unwrap();
        let s = Ball::pi(300).sqrt().unwrap();
        assert!(g.overlaps(&s));
        assert!(g.rel_log10() < -50.0);
    }

    #[test]
    fn gamma_negative_and_poles() {
        // Γ(−1/2) = −2√π
        let g = gamma(&Real::ratio(-1, 2), 40).unwrap();
        let want = Ball::pi(300).sqrt().unwrap().mul_i64(-2);
        assert!(g.overlaps(&want));
        assert!(matches!(gamma(&Real::int(-3), 30), Err(Error::Domain(_))));
        assert!(matches!(gamma(&Real::int(0), 30), Err(Error::Domain(_))));
        let r = rgamma_ball(&Ball::from_i64(-2, 200)).unwrap();
        assert!(r.contains_zero());
    }

    #[test]
    fn complex_gamma_matches_real_and_recurrence() {
        let z = Cplx::new(Real::ratio(7, 3), Real::ratio(1, 5));
        let g = gamma_complex(&z, 40).unwrap();
        // Γ(z+1) = z Γ(z)
        let z1 = Cplx::new(Real::ratio(10, 3), Real::ratio(1, 5));
        let g1 = gamma_complex(&z1, 40).unwrap();
        let lhs = g.mul(&z.ball(200));
        assert!(lhs.overlaps(&g1));
        // |Γ(iy)|² = π / (y sinh πy)
        let y = 0.75f64;
        let gi = gamma_complex(&Cplx::new(Real::int(0), Real::ratio(3, 4)), 30).unwrap();
        let (re, im) = gi.to_c64();
        let want = std::f64::consts::PI / (y * (std::f64::consts::PI * y).sinh());
        assert!(((re * re + im * im) - want).abs() < 1e-13);
    }

    #[test]
    fn beta_diag_quarter() {
        // B_diag(1/4) = Γ(1/4)²/Γ(1/2)
        let b = beta_diag(&Real::ratio(1, 4), 40).unwrap();
        let g = gamma(&Real::ratio(1, 4), 60).unwrap();
        let want = g.sqr().div(&Ball::pi(300).sqrt().unwrap()).unwrap();
        assert!(b.overlaps(&want));
    }
}
