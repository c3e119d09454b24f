use std::f64::consts::PI;

use rug::Float;

use super::basis::{log_norm, BasisSpec};
use super::grid::TimeGrid;
use crate::quad::integrate;
use crate::Error;

/// Double-precision quadrature value of a matrix element.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub re: f64,
    pub im: f64,
    /// Estimated absolute error, including the truncation tail bound.
    pub error: f64,
    /// Set when the requested tolerance was not reached.
    pub warning: Option<String>,
}

/// Tolerance targeted by the oracle.
pub const ORACLE_TOL: f64 = 1e-10;

/// `sin(y)/y`, by series near 0.
fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        let y2 = y * y;
        1.0 - y2 / 6.0 + y2 * y2 / 120.0
    } else {
        y.sin() / y
    }
}

/// `‖ψ_n 1_{q>Q}‖ = √(Γ(2n+2δ+1, 2aQ)/Γ(2n+2δ+1))`.
fn tail_norm(n: usize, a: f64, d: f64, q: f64) -> f64 {
    let s = Float::with_val(64, 2.0 * n as f64 + 2.0 * d + 1.0);
    let x = Float::with_val(64, 2.0 * a * q);
    let upper = s.clone().gamma_inc(&x);
    (upper / s.gamma()).to_f64().sqrt()
}

/// Truncation point: at least `40/a`, extended until the neglected tail is
/// below `bound`.
fn cutoff(m: usize, n: usize, a: f64, d: f64, bound: f64) -> (f64, f64) {
    let mut q = 40.0 / a;
    loop {
        let t = tail_norm(m, a, d, q) + tail_norm(n, a, d, q);
        if t <= bound || q > 1e4 / a {
            return (q, t);
        }
        q *= 1.25;
    }
}

/// Adaptive 2-D quadrature of `⟨ψ_m | C ψ_n⟩` from the defining kernel
/// `K(p,q) = −(1/4π) Σ_k ∫_{t_{2k−1}}^{t_{2k}} e^{it(p−q)} dt · ((p/q)^{1/4} + (q/p)^{1/4})`,
/// after substituting `p = v²`, `q = u²`.
pub fn quadrature_oracle(m: usize, n: usize, grid: &TimeGrid, spec: &BasisSpec) -> Result<OracleResult, Error> {
    spec.validate()?;
    let a = spec.a.to_f64();
    let d = spec.delta.to_f64();
    let big_m = grid.m() as f64;
    // |⟨χψ_m|Cχψ_n⟩ − ⟨ψ_m|Cψ_n⟩| ≤ ‖C‖ (tail_m + tail_n) with ‖C‖ ≤ M
    let (q_max, tail) = cutoff(m, n, a, d, 1e-3 * ORACLE_TOL / big_m);
    let trunc = big_m * tail;
    let ivals: Vec<(f64, f64)> = grid
        .intervals()
        .map(|(s, t)| {
            let (s, t) = (s.to_f64(), t.to_f64());
            (0.5 * (s + t), t - s)
        })
        .collect();
    let (lm, ln) = (log_norm(m, a, d), log_norm(n, a, d));
    // ψ_m(v²)·2v·p^{±1/4} = 2 E_m v^{2m+2δ+1±1/2} e^{−av²}
    let radial = move |ln_e: f64, k: usize, x: f64| -> [f64; 2] {
        if x == 0.0 {
            return [0.0, 0.0];
        }
        let base = ln_e + 2f64.ln() + (2.0 * k as f64 + 2.0 * d + 1.0) * x.ln() - a * x * x;
        let h = 0.5 * x.ln();
        [(base + h).exp(), (base - h).exp()]
    };
    let u_max = q_max.sqrt();
    let inner_tol = ORACLE_TOL / (4.0 * u_max);
    let mut worst_inner: f64 = 0.0;
    let outer = integrate(
        |v| {
            let fv = radial(lm, m, v);
            if fv[0] == 0.0 && fv[1] == 0.0 {
                return [0.0, 0.0];
            }
            let r = integrate(
                |u| {
                    let fu = radial(ln, n, u);
                    let w = fv[0] * fu[1] + fv[1] * fu[0];
                    if w == 0.0 {
                        return [0.0, 0.0];
                    }
                    let x = v * v - u * u;
                    let (mut re, mut im) = (0.0, 0.0);
                    for &(c, len) in &ivals {
                        let s = len * sinc(0.5 * len * x);
                        re += s * (c * x).cos();
                        im += s * (c * x).sin();
                    }
                    let k = -w / (4.0 * PI);
                    [k * re, k * im]
                },
                0.0,
                u_max,
                inner_tol,
                400,
            );
            worst_inner = worst_inner.max(r.error);
            r.value
        },
        0.0,
        u_max,
        ORACLE_TOL / 2.0,
        400,
    );
    let error = outer.error + worst_inner * u_max + trunc;
    let warning = (!outer.converged || error > 10.0 * ORACLE_TOL)
        .then(|| format!("oracle tolerance not reached: estimated error {error:.3e}"));
    Ok(OracleResult { re: outer.value[0], im: outer.value[1], error, warning })
}
