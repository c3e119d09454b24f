use crate::mpcore::{
    escalate, incomplete_beta_ball, lgamma_ball, rgamma_ball, Ball, CBall, Real,
};
use crate::Error;

/// `J(s1, s2; α, β; a) = ∫_{s1}^{s2} (a − it)^{−α−1} (a + it)^{−β−1} dt` on balls.
pub fn j_ball(s1: &Ball, s2: &Ball, alpha: &Ball, beta: &Ball, a: &Ball) -> Result<CBall, Error> {
    let p = a.prec();
    if s1.contains_zero() || s2.contains_zero() {
        return Err(Error::Domain("J endpoints must be nonzero".into()));
    }
    let mu = alpha.add(beta).add_i64(1);
    if !mu.is_positive() {
        return Err(Error::Domain("J requires α + β > −1".into()));
    }
    if !a.is_positive() {
        return Err(Error::Domain("J requires a > 0".into()));
    }
    let nu = beta.neg();
    let pi = Ball::pi(p);
    let bp1 = beta.add_i64(1);
    // e^{−iπ sgn(s)(β+1)} B(μ, −β; 2a/(a − is))
    let endpoint = |s: &Ball| -> Result<CBall, Error> {
        let den = a.sqr().add(&s.sqr());
        let z = CBall::new(a.sqr().mul_2exp(1), a.mul(s).mul_2exp(1)).div_real(&den)?;
        let sign = if s.is_positive() { -1 } else { 1 };
        let phase = CBall::expi(&pi.mul(&bp1).mul_i64(sign));
        Ok(phase.mul(&incomplete_beta_ball(&mu, &nu, &z)?))
    };
    let scale = a.mul_2exp(1).ln()?.mul(&mu).neg().exp(); // (2a)^{−μ}
    let diff = endpoint(s2)?.sub(&endpoint(s1)?);
    // −i · scale · diff
    let mut j = diff.mul_i().neg().mul_real(&scale);
    if s1.is_negative() && s2.is_positive() {
        let g = lgamma_ball(&mu)?.exp();
        let r = rgamma_ball(&alpha.add_i64(1))?.mul(&rgamma_ball(&bp1)?);
        let extra = pi.mul_2exp(1).mul(&scale).mul(&g).mul(&r);
        j = j.add(&CBall::from_real(extra));
    } else if !(s1.is_positive() || s2.is_negative()) {
        return Err(Error::Domain("J endpoints have uncertain sign".into()));
    }
    Ok(j)
}

/// Certified `J` for exactly specified inputs; `s1 < s2`, both nonzero.
pub fn j_eval(
    s1: &Real,
    s2: &Real,
    alpha: &Real,
    beta: &Real,
    a: &Real,
    digits: u32,
) -> Result<CBall, Error> {
    if s1.is_zero() || s2.is_zero() {
        return Err(Error::Domain(
            "J endpoints must be nonzero; translate the grid away from 0".into(),
        ));
    }
    if !s2.ball(128).sub(&s1.ball(128)).is_positive() {
        return Err(Error::Domain(format!("J requires s1 < s2, got {s1}, {s2}")));
    }
    escalate::complex(digits, 16, |bits| {
        j_ball(&s1.ball(bits), &s2.ball(bits), &alpha.ball(bits), &beta.ball(bits), &a.ball(bits))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        let r = Real::ratio;
        assert!(j_eval(&r(0, 1), &r(1, 1), &r(1, 4), &r(1, 4), &r(1, 1), 30).is_err());
        assert!(j_eval(&r(1, 1), &r(2, 1), &r(-3, 4), &r(-1, 2), &r(1, 1), 30).is_err());
        assert!(j_eval(&r(2, 1), &r(1, 1), &r(1, 4), &r(1, 4), &r(1, 1), 30).is_err());
    }

    #[test]
    fn symmetric_interval_is_real() {
        let r = Real::ratio;
        let j = j_eval(&r(-3, 2), &r(3, 2), &r(5, 4), &r(5, 4), &Real::ratio_over_pi(2, 1), 40)
            .unwrap();
        assert!(j.im.contains_zero());
    }
}
