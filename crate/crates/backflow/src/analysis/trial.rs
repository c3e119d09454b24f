use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::quad::integrate;
use crate::Error;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Chebyshev polynomial of the second kind `U_n(t)` by its recurrence.
pub fn chebyshev_u(n: usize, t: f64) -> f64 {
    let (mut u0, mut u1) = (1.0, 2.0 * t);
    if n == 0 {
        return u0;
    }
    for _ in 1..n {
        let u2 = 2.0 * t * u1 - u0;
        u0 = u1;
        u1 = u2;
    }
    u1
}

/// `g_M(x) = sin(2Mx)/(2Mx cos x)`, continuous through its removable
/// singularities. Evaluated as `U_{M−1}(cos 2x) sinc(x)/M`, which has no
/// singular points at all.
pub fn g_kernel(m: usize, x: f64) -> f64 {
    assert!(m >= 1, "g_M needs M ≥ 1");
    chebyshev_u(m - 1, (2.0 * x).cos()) * sinc(x) / m as f64
}

/// `S(η) = 1 − (31π²/80)η^{1/4} − (5/8)η − (9π²/176)η^{5/4}`.
pub fn s_function(eta: f64) -> f64 {
    let pi2 = PI * PI;
    let r = eta.powf(0.25);
    1.0 - 31.0 * pi2 / 80.0 * r - 0.625 * eta - 9.0 * pi2 / 176.0 * eta * r
}

/// `2^{7/4}ε^{3/4}/(3π^{11/4})`.
fn prefactor(eps: f64) -> f64 {
    2f64.powf(1.75) * eps.powf(0.75) / (3.0 * PI.powf(2.75))
}

/// The lower bound `2^{7/4}ε^{3/4}M^{1/4}S(2ε/(πM))/(3π^{11/4})` on the
/// trial-state expectation.
pub fn trial_state_bound(m: usize, eps: f64) -> f64 {
    prefactor(eps) * (m as f64).powf(0.25) * s_function(2.0 * eps / (PI * m as f64))
}

/// Piecewise-constant state of height `√(M/2ε)` on `I₀ ∪ I₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub m: usize,
    pub epsilon: f64,
}

impl TrialState {
    pub fn new(m: usize, epsilon: f64) -> Result<Self, Error> {
        if m == 0 || m % 2 != 0 {
            return Err(Error::Domain(format!("the trial state needs an even M ≥ 2, got {m}")));
        }
        if !(epsilon > 0.0 && epsilon <= PI / 6.0) {
            return Err(Error::Domain(format!("ε must lie in (0, π/6], got {epsilon}")));
        }
        Ok(TrialState { m, epsilon })
    }

    /// `I₀ = [0, ε/M]`.
    pub fn i0(&self) -> (f64, f64) {
        (0.0, self.epsilon / self.m as f64)
    }

    /// `I₁ = [π/2 − ε/2M, π/2 + ε/2M]`.
    pub fn i1(&self) -> (f64, f64) {
        let h = self.epsilon / (2.0 * self.m as f64);
        (FRAC_PI_2 - h, FRAC_PI_2 + h)
    }

    /// `ψ_M(q)`.
    pub fn eval(&self, q: f64) -> f64 {
        let (a, b) = self.i0();
        let (c, d) = self.i1();
        if (a..=b).contains(&q) || (c..=d).contains(&q) {
            (self.m as f64 / (2.0 * self.epsilon)).sqrt()
        } else {
            0.0
        }
    }

    /// `u ∈ [0,1] ↦ (q, dq/du, q^{1/4})`. On `I₀` the map `q = Lu⁴` absorbs
    /// the `q^{−1/4}` endpoint singularity of the weight.
    fn chart(&self, interval: usize, u: f64) -> (f64, f64, f64) {
        if interval == 0 {
            let l = self.i0().1;
            let u2 = u * u;
            let q = l * u2 * u2;
            (q, 4.0 * l * u2 * u, l.powf(0.25) * u)
        } else {
            let (c, d) = self.i1();
            let q = c + (d - c) * u;
            (q, d - c, q.powf(0.25))
        }
    }
}

/// Expectation value of the M-fold operator in a trial state, with the
/// analytic lower bound it must exceed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialResult {
    pub m: usize,
    pub epsilon: f64,
    pub value: f64,
    pub bound: f64,
    /// `[I₀₀, I₀₁, I₁₁]`.
    pub integrals: [f64; 3],
    /// Estimated absolute error of `value`.
    pub error: f64,
    pub warning: Option<String>,
}

impl TrialResult {
    pub fn holds(&self) -> bool {
        self.value - self.error >= self.bound
    }
}

/// Relative tolerance of the trial-state quadrature.
pub const TRIAL_TOL: f64 = 1e-10;

/// `−(M²/4πε)[I₀₀ + 2I₀₁ + I₁₁]` with
/// `I_ij = ∫_{I_i×I_j} g_M(p−q)((p/q)^{1/4} + (q/p)^{1/4}) dp dq`, by nested
/// adaptive Gauss–Kronrod quadrature.
pub fn trial_state_expectation(m: usize, epsilon: f64) -> Result<TrialResult, Error> {
    let st = TrialState::new(m, epsilon)?;
    let scale = (epsilon / m as f64).powi(2);
    let tol = TRIAL_TOL * scale;
    let mut ints = [0.0; 3];
    let mut err = 0.0;
    let mut failed = false;
    for (slot, (i, j)) in [(0usize, 0usize), (0, 1), (1, 1)].into_iter().enumerate() {
        let mut inner_err: f64 = 0.0;
        let outer = integrate(
            |u| {
                let (p, jp, rp) = st.chart(i, u);
                let r = integrate(
                    |v| {
                        let (q, jq, rq) = st.chart(j, v);
                        [g_kernel(m, p - q) * jp * jq * (rp / rq + rq / rp)]
                    },
                    0.0,
                    1.0,
                    1e-3 * tol,
                    200,
                );
                inner_err = inner_err.max(r.error);
                if !r.converged {
                    failed = true;
                }
                r.value
            },
            0.0,
            1.0,
            tol,
            200,
        );
        failed |= !outer.converged;
        ints[slot] = outer.value[0];
        err += outer.error + inner_err;
    }
    let c = m as f64 * m as f64 / (4.0 * PI * epsilon);
    let value = -c * (ints[0] + 2.0 * ints[1] + ints[2]);
    let error = c * (2.0 * err) + value.abs() * 4.0 * f64::EPSILON;
    let warning = failed.then(|| format!("trial-state quadrature missed its tolerance; achieved ≈ {error:e}"));
    Ok(TrialResult {
        m,
        epsilon,
        value,
        bound: trial_state_bound(m, epsilon),
        integrals: ints,
        error,
        warning,
    })
}

/// First positive zero of `S` and the best constant `k` of the growth bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkConstants {
    pub eta0: f64,
    pub k: f64,
    /// Maximizing `ε ∈ [0, πη₀]`.
    pub eps_star: f64,
}

/// `η₀` by bracketed bisection, then `k = max_{ε∈[0,πη₀]} 2^{7/4}ε^{3/4}S(ε/π)/(3π^{11/4})`
/// by golden-section search.
pub fn s_and_k() -> SkConstants {
    // S(0) = 1 and S decreases; expand until the sign changes
    let mut hi = 1e-6;
    while s_function(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s_function(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta0 = lo;
    let f = |e: f64| prefactor(e) * s_function(e / PI);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, PI * eta0);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-15 * (PI * eta0) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let eps_star = 0.5 * (a + b);
    SkConstants { eta0, k: f(eps_star), eps_star }
}
