use rug::float::Round;
use rug::Float;
use serde::{Deserialize, Serialize};

use super::SpectrumResult;
use crate::mpcore::Mag;
use crate::Error;

/// Per-eigenvalue perturbation radii for a definite pencil.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorCertificate {
    /// Upper bounds on `|λ_i − λ̃_i|`, aligned with the eigenvalues.
    pub radii: Vec<f64>,
    /// Distance from each computed eigenvalue to an eigenvalue of the
    /// midpoint pencil, from the residual.
    pub solver_radii: Vec<f64>,
    pub c_max: f64,
    pub delta_a: f64,
    pub delta_p: f64,
    pub min_gram_eig: f64,
    pub lambda_bound: f64,
    pub n: usize,
}

impl ErrorCertificate {
    /// Perturbation radius plus solver radius for eigenvalue `i`.
    pub fn total_radius(&self, i: usize) -> f64 {
        let t = self.radii[i] + self.solver_radii[i];
        t + t * f64::EPSILON
    }
}

const P: u32 = 64;

fn up(x: Float) -> Float {
    Float::with_val_round(P, x, Round::Up).0
}

/// `C_max = n²(1+λ_b²)(εA² + εP²)/σ²`, rounded up. The factor `n²` is the
/// sharp constant in `‖M‖₂ ≤ n‖M‖_∞`.
pub fn c_max(n: usize, lambda_bound: f64, delta_a: &Mag, delta_p: &Mag, min_gram: &Float) -> Float {
    let n2 = up(Float::with_val(P, n as u64) * n as u64);
    let lb = up(Float::with_val(P, lambda_bound.abs()).square() + 1u32);
    let e = up(delta_a.as_float().clone().square() + delta_p.as_float().clone().square());
    let s2 = Float::with_val_round(P, min_gram.square_ref(), Round::Down).0;
    if s2.cmp0() != Some(std::cmp::Ordering::Greater) {
        return Float::with_val(P, f64::INFINITY);
    }
    up(up(up(n2 * lb) * e) / s2)
}

/// Element digits needed for `C_max ≤ 1/4` at this `n`, `λ_b`, `σ`.
pub fn required_digits(n: usize, lambda_bound: f64, min_gram: f64) -> u32 {
    let v = 8.0 * (n as f64).powi(2) * (1.0 + lambda_bound * lambda_bound) / (min_gram * min_gram);
    (0.5 * v.log10()).ceil().max(1.0) as u32
}

/// Certificate for `result` under element-wise perturbations of size
/// `element_radius` in both matrices. Every eigenvalue of the exact pencil
/// lies within `radii[i]` of the corresponding midpoint eigenvalue.
pub fn certify(
    result: &SpectrumResult,
    element_radius: &Mag,
    n: usize,
    lambda_bound: f64,
) -> Result<ErrorCertificate, Error> {
    // a complex entry with radius r in both parts moves by up to √2 r
    let a_rad = if result.complex { element_radius.mul_f64(std::f64::consts::SQRT_2) } else { element_radius.clone() };
    let delta_a = a_rad.add(&result.dropped_imag);
    let delta_p = element_radius.clone();
    let cm = c_max(n, lambda_bound, &delta_a, &delta_p, &result.min_gram_eig);
    let half = Float::with_val(P, 0.5);
    if cm >= half {
        return Err(Error::Uncertifiable {
            required_digits: required_digits(n, lambda_bound, result.min_gram_eig.to_f64()),
            c_max: cm.to_f64(),
        });
    }
    let denom = Float::with_val_round(P, Float::with_val(P, 1) - up(cm.clone() * 2u32), Round::Down).0;
    let radii = result
        .eigenvalues
        .iter()
        .map(|l| {
            let l2 = up(Float::with_val_round(P, l.abs_ref(), Round::Up).0.square());
            let f = up(up(l2 * 2u32) + 1u32);
            let r = up(up(up(cm.clone() * f) / &denom).sqrt());
            r.to_f64_round(Round::Up)
        })
        .collect();
    let solver_radii = result.solver_radii().iter().map(|m| m.to_f64()).collect();
    Ok(ErrorCertificate {
        radii,
        solver_radii,
        c_max: cm.to_f64_round(Round::Up),
        delta_a: delta_a.to_f64(),
        delta_p: delta_p.to_f64(),
        min_gram_eig: result.min_gram_eig.to_f64_round(Round::Down),
        lambda_bound,
        n,
    })
}
