use rug::Float;
use serde::{Deserialize, Serialize};

use crate::mpcore::{escalate, lgamma_ball, Ball, Real};
use crate::Error;

/// Basis parameters: `ψ_n(q) = E_n q^{n+δ} e^{−aq}` for `n = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub a: Real,
    pub delta: Real,
    pub n: usize,
}

impl BasisSpec {
    pub fn new(a: Real, delta: Real, n: usize) -> Result<Self, Error> {
        let s = BasisSpec { a, delta, n };
        s.validate()?;
        Ok(s)
    }

    /// The default basis for `M` intervals: `a = 2M/π`, `δ = −1/4`.
    pub fn default_for(m: usize, n: usize) -> Self {
        BasisSpec {
            a: Real::ratio_over_pi(2 * m as i64, 1),
            delta: Real::ratio(-1, 4),
            n,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.a.ball(128).is_positive() {
            return Err(Error::Domain(format!("basis scale a must be positive, got {}", self.a)));
        }
        check_delta(&self.delta)
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn with_n(&self, n: usize) -> BasisSpec {
        BasisSpec { n, ..self.clone() }
    }
}

pub(crate) fn check_delta(delta: &Real) -> Result<(), Error> {
    let d = delta.ball(128);
    if !(d.add(&Ball::from_ratio(1, 2, 128)).is_positive()
        && Ball::from_ratio(1, 2, 128).sub(&d).is_positive())
    {
        return Err(Error::Domain(format!("δ must lie in (−1/2, 1/2), got {delta}")));
    }
    Ok(())
}

/// `ψ_n(q)` in double precision, evaluated in log space.
pub fn basis_eval(n: usize, spec: &BasisSpec, q: f64) -> Result<f64, Error> {
    Ok(log_basis_eval(n, spec, q)?.exp())
}

/// `log ψ_n(q)`.
pub fn log_basis_eval(n: usize, spec: &BasisSpec, q: f64) -> Result<f64, Error> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("basis functions are evaluated at q > 0, got {q}")));
    }
    let a = spec.a.to_f64();
    let d = spec.delta.to_f64();
    Ok(log_norm(n, a, d) + (n as f64 + d) * q.ln() - a * q)
}

/// `log E_n = (n+δ+½) log 2a − ½ log Γ(2n+2δ+1)`.
pub(crate) fn log_norm(n: usize, a: f64, d: f64) -> f64 {
    let x = n as f64 + d + 0.5;
    x * (2.0 * a).ln() - 0.5 * lgamma_f64(2.0 * x)
}

pub(crate) fn lgamma_f64(x: f64) -> f64 {
    Float::with_val(80, x).ln_gamma().to_f64()
}

/// `P_mn = Γ(x_m+x_n)/√(Γ(2x_m)Γ(2x_n))` with `x_k = k+δ+½` on balls.
pub(crate) fn gram_ball(m: usize, n: usize, delta: &Ball) -> Result<Ball, Error> {
    let p = delta.prec();
    if m == n {
        return Ok(Ball::one(p));
    }
    let x = |k: usize| delta.add(&Ball::from_ratio(2 * k as i64 + 1, 2, p));
    let (xm, xn) = (x(m), x(n));
    let l = lgamma_ball(&xm.add(&xn))?
        .sub(&lgamma_ball(&xm.mul_2exp(1))?.add(&lgamma_ball(&xn.mul_2exp(1))?).mul_2exp(-1));
    Ok(l.exp())
}

/// Certified Gram element `⟨ψ_m|ψ_n⟩ = √(B_diag(x_m)B_diag(x_n))/B(x_m,x_n)`.
/// It does not depend on `a`; the diagonal is exactly 1.
pub fn gram_element(m: usize, n: usize, delta: &Real, digits: u32) -> Result<Ball, Error> {
    check_delta(delta)?;
    escalate::real(digits, 16, |bits| gram_ball(m, n, &delta.ball(bits)))
}

/// The full `(N+1)×(N+1)` Gram matrix at `bits`, as enclosures.
pub(crate) fn gram_matrix(dim: usize, delta: &Real, bits: u32) -> Result<Vec<Ball>, Error> {
    let d = delta.ball(bits);
    // Γ(x_m + x_n) depends only on m+n
    let lsum = (0..(2 * dim).max(1) - 1)
        .map(|s| lgamma_ball(&d.mul_2exp(1).add(&Ball::from_i64(s as i64 + 1, bits))))
        .collect::<Result<Vec<_>, _>>()?;
    let half: Vec<Ball> = (0..dim).map(|k| lsum[2 * k].mul_2exp(-1)).collect();
    let mut out = vec![Ball::zero(bits); dim * dim];
    for m in 0..dim {
        out[m * dim + m] = Ball::one(bits);
        for n in m + 1..dim {
            let v = lsum[m + n].sub(&half[m]).sub(&half[n]).exp();
            out[m * dim + n] = v.clone();
            out[n * dim + m] = v;
        }
    }
    Ok(out)
}
