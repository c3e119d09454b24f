//! Incomplete beta function `B(μ, ν; z)` for complex `z`.

use super::ball::{Ball, CBall};
use super::escalate;
use super::hyp2f1::hyp2f1_ball;
use super::real::{Cplx, Real};
use crate::Error;

fn check_cuts(z: &CBall) -> Result<(), Error> {
    if z.im.contains_zero() && (z.re.lower() <= 0 || z.re.upper() >= 1) {
        return Err(Error::Branch(
            "incomplete beta argument meets (−∞, 0] ∪ [1, ∞)".into(),
        ));
    }
    Ok(())
}

/// `B(μ, ν; z) = z^μ/μ · ₂F₁(μ, 1−ν; μ+1; z)` on balls, principal branch of
/// `z^μ` (cut along the negative real axis).
pub fn incomplete_beta_ball(mu: &Ball, nu: &Ball, z: &CBall) -> Result<CBall, Error> {
    if !mu.is_positive() {
        return Err(Error::Domain("incomplete beta requires μ > 0".into()));
    }
    check_cuts(z)?;
    let p = z.prec().max(mu.prec());
    let one = Ball::one(p);
    let f = hyp2f1_ball(mu, &one.sub(nu), &mu.add(&one), z)?;
    let zmu = z.pow_real(mu)?;
    zmu.mul(&f).div_real(mu)
}

/// Certified `B(μ, ν; z)` to `digits` relative digits.
pub fn incomplete_beta(mu: &Real, nu: &Real, z: &Cplx, digits: u32) -> Result<CBall, Error> {
    check_cuts(&z.ball(64))?;
    if !mu.ball(64).is_positive() {
        return Err(Error::Domain("incomplete beta requires μ > 0".into()));
    }
    escalate::complex(digits, 16, |bits| {
        incomplete_beta_ball(&mu.ball(bits), &nu.ball(bits), &z.ball(bits))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_case() {
        // B(2,3;1/2) = ∫_0^{1/2} v (1−v)^2 dv = 1/8 − 1/12 + 1/64 = 11/192
        let v = incomplete_beta(&Real::int(2), &Real::int(3), &Cplx::real(Real::ratio(1, 2)), 40)
            .unwrap();
        let want = CBall::from_real(Ball::from_ratio(11, 192, 300));
        assert!(v.overlaps(&want), "{v}");
    }

    #[test]
    fn cuts_rejected() {
        for z in [Real::ratio(-1, 2), Real::int(0), Real::int(1), Real::int(3)] {
            let r = incomplete_beta(&Real::int(2), &Real::int(3), &Cplx::real(z), 30);
            assert!(matches!(r, Err(Error::Branch(_))));
        }
        let r = incomplete_beta(&Real::int(0), &Real::int(3), &Cplx::real(Real::ratio(1, 2)), 30);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
