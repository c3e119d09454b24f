use crate::mpcore::{lgamma_ball, Ball, CBall, Mag, PrecisionPolicy};
use crate::Error;

use super::basis::BasisSpec;
use super::grid::TimeGrid;
use super::jint::j_ball;

/// `log(E_k Γ(α_k^± + 1))` where `α_k^± = k + δ ± 1/4`, on balls.
fn log_weight(k: usize, delta: &Ball, a: &Ball, plus: bool) -> Result<Ball, Error> {
    let p = delta.prec();
    let x = delta.add(&Ball::from_ratio(2 * k as i64 + 1, 2, p)); // k+δ+½
    let log_e = x
        .mul(&a.mul_2exp(1).ln()?)
        .sub(&lgamma_ball(&x.mul_2exp(1))?.mul_2exp(-1));
    let shift = if plus { Ball::from_ratio(5, 4, p) } else { Ball::from_ratio(3, 4, p) };
    Ok(log_e.add(&lgamma_ball(&delta.add(&shift).add_i64(k as i64))?))
}

/// `⟨ψ_m | C ψ_n⟩` on balls at `bits`.
pub(crate) fn element_ball(
    m: usize,
    n: usize,
    grid: &TimeGrid,
    spec: &BasisSpec,
    bits: u32,
) -> Result<CBall, Error> {
    let a = spec.a.ball(bits);
    let d = spec.delta.ball(bits);
    let quarter = Ball::from_ratio(1, 4, bits);
    let alpha = |k: usize, plus: bool| {
        let b = d.add_i64(k as i64);
        if plus {
            b.add(&quarter)
        } else {
            b.sub(&quarter)
        }
    };
    // D_mn = E_m E_n Γ(α_m^+ + 1) Γ(α_n^− + 1), and D_nm with the roles swapped
    let d_mn = log_weight(m, &d, &a, true)?.add(&log_weight(n, &d, &a, false)?).exp();
    let d_nm = log_weight(m, &d, &a, false)?.add(&log_weight(n, &d, &a, true)?).exp();
    let (am_p, am_m, an_p, an_m) = (alpha(m, true), alpha(m, false), alpha(n, true), alpha(n, false));
    let mut acc = CBall::zero(bits);
    for (s1, s2) in grid.intervals() {
        let (s1, s2) = (s1.ball(bits), s2.ball(bits));
        let j1 = j_ball(&s1, &s2, &am_p, &an_m, &a)?;
        let j2 = j_ball(&s1, &s2, &am_m, &an_p, &a)?;
        acc = acc.add(&j1.mul_real(&d_mn)).add(&j2.mul_real(&d_nm));
    }
    let four_pi = Ball::pi(bits).mul_2exp(2);
    acc.div_real(&four_pi).map(|v| v.neg())
}

/// Certified exact matrix element `⟨ψ_m | C^{(M)} ψ_n⟩` of the M-fold backflow
/// operator, with absolute radius at most `policy.target_radius()`.
pub fn mfold_element(
    m: usize,
    n: usize,
    grid: &TimeGrid,
    spec: &BasisSpec,
    policy: &PrecisionPolicy,
) -> Result<CBall, Error> {
    spec.validate()?;
    policy.validate()?;
    element_to_radius(m, n, grid, spec, policy.element_digits, &policy.target_radius(), policy.ceiling_factor)
}

pub(crate) fn element_to_radius(
    m: usize,
    n: usize,
    grid: &TimeGrid,
    spec: &BasisSpec,
    digits: u32,
    target: &Mag,
    ceiling: u32,
) -> Result<CBall, Error> {
    let base = crate::mpcore::digits_to_bits(digits) + 32;
    let max = crate::mpcore::digits_to_bits(digits * ceiling) + 32;
    let mut bits = base;
    let mut best = None;
    loop {
        match element_ball(m, n, grid, spec, bits) {
            Ok(v) => {
                if v.rad() <= *target {
                    return Ok(v);
                }
                best = Some(v.rad().log10());
            }
            Err(Error::PrecisionExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
        if bits >= max {
            return Err(Error::PrecisionExhausted { digits, achieved: best.map(|r| -r) });
        }
        bits = (bits * 2).min(max);
    }
}
