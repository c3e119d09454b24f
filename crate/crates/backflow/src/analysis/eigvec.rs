use rug::Float;
use serde::{Deserialize, Serialize};

use super::sweep::p_inner;
use crate::eigensolver::EigVec;
use crate::operators::{BasisSpec, MatrixPair};
use crate::Error;

/// Optional envelope scaling of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileScale {
    None,
    /// Multiply by `p^{3/4}`, flattening the large-`p` envelope.
    P34,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub p: f64,
    pub re: f64,
    pub im: f64,
}

/// `ψ(p) = Σ_n v_n ψ_{n,a,δ}(p)` on `p_grid`.
///
/// Each term is formed in log space and the sum is accumulated at the
/// coefficient precision, so the large alternating coefficients of an
/// ill-conditioned basis cancel without loss.
pub fn eigvec_profile(
    v: &EigVec,
    spec: &BasisSpec,
    p_grid: &[f64],
    scale: ProfileScale,
) -> Result<Vec<ProfilePoint>, Error> {
    if v.is_empty() {
        return Err(Error::Domain("empty coefficient vector".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!("profiles are evaluated at p > 0, got {p}")));
    }
    let prec = v.re.iter().map(Float::prec).max().unwrap_or(64).max(128) + 32;
    let a = spec.a.ball(prec).mid().clone();
    let d = spec.delta.ball(prec).mid().clone();
    let ln2a = Float::with_val(prec, &a * 2u32).ln();
    // log E_n = (n+δ+½) log 2a − ½ log Γ(2n+2δ+1)
    let log_e: Vec<Float> = (0..v.len())
        .map(|n| {
            let x = Float::with_val(prec, &d + (n as f64 + 0.5));
            let g = Float::with_val(prec, &x * 2u32).ln_gamma();
            Float::with_val(prec, &x * &ln2a) - g / 2u32
        })
        .collect();
    let mut out = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let pf = Float::with_val(prec, p);
        let lnp = Float::with_val(prec, pf.ln_ref());
        let ap = Float::with_val(prec, &a * &pf);
        let mut re = Float::new(prec);
        let mut im = Float::new(prec);
        for (n, le) in log_e.iter().enumerate() {
            let lp = Float::with_val(prec, &d + n as u32) * &lnp;
            let psi = Float::with_val(prec, le + lp - &ap).exp();
            re += &v.re[n] * &psi;
            im += &v.im[n] * &psi;
        }
        let w = match scale {
            ProfileScale::None => 1.0,
            ProfileScale::P34 => p.powf(0.75),
        };
        out.push(ProfilePoint { p, re: re.to_f64() * w, im: im.to_f64() * w });
    }
    Ok(out)
}

/// `min_± √(u†Pu)` with `u = ±v_A − v_B`, the shorter vector zero-padded.
/// Both vectors must use the basis parameters of `pair`, whose Gram block
/// must be at least as large as either vector.
pub fn eigvec_distance(
    a: (&BasisSpec, &EigVec),
    b: (&BasisSpec, &EigVec),
    pair: &MatrixPair,
) -> Result<f64, Error> {
    for (s, v) in [a, b] {
        if s.a != pair.spec.a || s.delta != pair.spec.delta {
            return Err(Error::Domain(format!(
                "basis parameters (a = {}, δ = {}) differ from the Gram matrix's (a = {}, δ = {})",
                s.a, s.delta, pair.spec.a, pair.spec.delta
            )));
        }
        if v.len() > pair.dim() {
            return Err(Error::Domain(format!("vector of length {} exceeds the Gram block {}", v.len(), pair.dim())));
        }
    }
    let (va, vb) = (a.1, b.1);
    let prec = va.re.iter().chain(&vb.re).map(Float::prec).max().unwrap_or(64);
    let (aa, _) = p_inner(pair, va, va, prec);
    let (bb, _) = p_inner(pair, vb, vb, prec);
    let (ab, _) = p_inner(pair, va, vb, prec);
    // ‖±a − b‖² = aa + bb ∓ 2 Re⟨a,b⟩
    let ab2 = Float::with_val(prec, ab.abs() * 2u32);
    let d2 = Float::with_val(prec, &aa + &bb) - ab2;
    Ok(d2.max(&Float::new(prec)).sqrt().to_f64())
}
