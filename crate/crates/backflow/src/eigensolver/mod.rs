//! Generalized symmetric/Hermitian-definite eigensolver and eigenvalue
//! certificates.
//!
//! `A v = λ P v` is reduced with `P = LLᵀ` to `C = L⁻¹ A L⁻ᵀ`. Full mode
//! diagonalizes `C` by cyclic Jacobi; extremes mode tridiagonalizes it and
//! brackets the outer eigenvalues by Sturm-sequence bisection before inverse
//! iteration. Complex Hermitian pencils are embedded as real symmetric ones
//! of twice the size.

mod certify;
pub(crate) mod dense;

pub use certify::{c_max, certify, required_digits, ErrorCertificate};

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;

use crate::mpcore::{digits_to_bits, Mag, PrecisionPolicy};
use crate::operators::MatrixPair;
use crate::Error;
use dense::{backward, cholesky, forward, jacobi, reduce, tridiagonalize};

/// What to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Every eigenpair.
    Full,
    /// Only the smallest and largest eigenpairs.
    Extremes,
}

/// A coefficient vector `v` (complex in general).
#[derive(Clone, Debug)]
pub struct EigVec {
    pub re: Vec<Float>,
    pub im: Vec<Float>,
}

impl EigVec {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// Eigenpairs of a pencil, sorted ascending.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<Float>,
    /// `P`-normalized vectors (`v†Pv = 1`), one per eigenvalue.
    pub vectors: Vec<EigVec>,
    /// `‖Av − λPv‖₂` per pair, evaluated on the stored midpoints.
    pub residual_norms: Vec<Float>,
    /// Certified lower bound on the smallest eigenvalue of `P`.
    pub min_gram_eig: Float,
    /// Bits used for the reduction.
    pub working_bits: u32,
    /// Extra perturbation folded into `‖ΔA‖_∞` when the imaginary part of a
    /// numerically real `A` is dropped.
    pub dropped_imag: Mag,
    /// `A` was solved as a complex Hermitian matrix; its entries carry
    /// independent real and imaginary radii.
    pub complex: bool,
}

impl SpectrumResult {
    /// Distance from each computed eigenvalue to an exact eigenvalue of the
    /// midpoint pencil: `‖r‖₂ / √min σ(P)`.
    pub fn solver_radii(&self) -> Vec<Mag> {
        let s = Float::with_val_round(64, self.min_gram_eig.sqrt_ref(), Round::Down).0;
        self.residual_norms.iter().map(|r| Mag::from_float(r).div_lower(&s)).collect()
    }
}

/// Working bits for a pencil with Gram condition number `10^log10_kappa`.
pub fn working_bits(policy: &PrecisionPolicy, log10_kappa: f64) -> u32 {
    let digits = policy.solver_digits as f64 + 10.0 + (0.5 * log10_kappa.max(0.0)).ceil();
    digits_to_bits(digits as u32) + 16
}

/// Real symmetric form of the pencil at `prec`: `(A, P, n_real)`; complex `A`
/// is embedded as `[[X, −Y], [Y, X]]` with `P ⊕ P`.
fn real_form(pair: &MatrixPair, prec: u32, embed: bool) -> (Vec<Float>, Vec<Float>, usize) {
    let n = pair.dim();
    let m = if embed { 2 * n } else { n };
    let mut a = dense::zeros(m, prec);
    let mut p = dense::zeros(m, prec);
    for i in 0..n {
        for j in 0..n {
            let x = Float::with_val(prec, pair.a_re(i, j));
            let g = Float::with_val(prec, pair.p(i, j));
            a[i * m + j] = x.clone();
            p[i * m + j] = g.clone();
            if embed {
                let y = Float::with_val(prec, pair.a_im(i, j));
                a[(i + n) * m + j + n] = x;
                p[(i + n) * m + j + n] = g;
                a[(i + n) * m + j] = y.clone();
                a[i * m + j + n] = -y;
            }
        }
    }
    (a, p, m)
}

/// Decide whether `A` may be treated as real.
fn needs_embedding(pair: &MatrixPair) -> (bool, Mag) {
    if pair.is_real() {
        (false, pair.max_imag())
    } else {
        (true, Mag::zero())
    }
}

/// Smallest-eigenvalue estimate of `P = LLᵀ` by inverse iteration, then a
/// certified lower bound: `σ` is accepted once `P − σI` has a Cholesky
/// factorization, minus the factorization's backward-error bound.
pub(crate) fn min_gram_eig(p: &[Float], stride: usize, n: usize, l: &[Float], prec: u32) -> Result<Float, Error> {
    let mut y = vec![Float::with_val(prec, 1); n];
    let mut est = Float::with_val(prec, 1);
    for it in 0..40 {
        forward(l, n, &mut y);
        backward(l, n, &mut y);
        let mut nrm = Float::new(prec);
        for v in &y {
            nrm += Float::with_val(prec, v.square_ref());
        }
        let nrm = nrm.sqrt();
        for v in y.iter_mut() {
            *v /= &nrm;
        }
        // Rayleigh quotient yᵀPy
        let mut rq = Float::new(prec);
        for i in 0..n {
            let mut s = Float::new(prec);
            for j in 0..n {
                s += &p[i * stride + j] * &y[j];
            }
            rq += s * &y[i];
        }
        let change = Float::with_val(53, Float::with_val(prec, &rq - &est).abs() / &rq).to_f64();
        est = rq;
        if it > 3 && change < 1e-12 {
            break;
        }
    }
    let u = Float::with_val(64, Float::i_exp(1, 1 - prec as i32));
    let mut sigma = Float::with_val(prec, &est * Float::with_val(prec, 1.0 - 1.0 / 64.0));
    for _ in 0..200 {
        let mut shifted: Vec<Float> = (0..n * n)
            .map(|k| Float::with_val(prec, &p[(k / n) * stride + k % n]))
            .collect();
        for i in 0..n {
            shifted[i * n + i] -= &sigma;
        }
        if let Ok(ls) = cholesky(&shifted, n, n, prec) {
            // (P − σI) + E = L̃L̃ᵀ with ‖E‖₂ ≤ γ_{n+1} ‖L̃‖_F²
            let mut f2 = Float::new(64);
            for x in &ls {
                f2 += Float::with_val_round(64, x.square_ref(), Round::Up).0;
            }
            let g = Float::with_val_round(64, &u * (n as u32 + 1), Round::Up).0;
            let g = Float::with_val_round(64, &g / (Float::with_val(64, 1) - &g), Round::Up).0;
            let e = Float::with_val_round(64, f2 * g, Round::Up).0;
            let lb = Float::with_val_round(prec, &sigma - &e, Round::Down).0;
            if lb.cmp0() != Some(std::cmp::Ordering::Greater) {
                return Err(Error::CholeskyBreakdown { pivot: 0, dim: n });
            }
            return Ok(lb);
        }
        sigma /= 2u32;
    }
    Err(Error::IterationCeiling("could not certify min σ(P)".into()))
}

/// `P`-normalize, fix the sign (largest-magnitude component real positive),
/// and compute `‖Av − λPv‖₂` for a real-form vector.
fn finish(
    x: Vec<Float>,
    lambda: &Float,
    a: &[Float],
    p: &[Float],
    stride: usize,
    m: usize,
    n: usize,
    embed: bool,
    prec: u32,
) -> (EigVec, Float) {
    let mut x = x;
    let mut px = vec![Float::new(prec); m];
    let matvec = |mat: &[Float], v: &[Float], out: &mut [Float]| {
        for i in 0..m {
            let mut s = Float::new(prec);
            for j in 0..m {
                s += &mat[i * stride + j] * &v[j];
            }
            out[i] = s;
        }
    };
    matvec(p, &x, &mut px);
    let mut nrm = Float::new(prec);
    for i in 0..m {
        nrm += &x[i] * &px[i];
    }
    let mut nrm = nrm.sqrt();
    if !embed {
        // largest-magnitude component positive
        let big = (0..m).max_by(|&i, &j| x[i].clone().abs().total_cmp(&x[j].clone().abs())).unwrap_or(0);
        if x[big].is_sign_negative() {
            nrm = -nrm;
        }
    }
    for v in x.iter_mut() {
        *v /= &nrm;
    }
    let (re, im) = if embed {
        let (u, w) = x.split_at(n);
        // rotate the phase so the largest-magnitude component is real positive
        let big = (0..n)
            .max_by(|&i, &j| {
                let a = Float::with_val(prec, u[i].square_ref()) + Float::with_val(prec, w[i].square_ref());
                let b = Float::with_val(prec, u[j].square_ref()) + Float::with_val(prec, w[j].square_ref());
                a.total_cmp(&b)
            })
            .unwrap_or(0);
        let mag = (Float::with_val(prec, u[big].square_ref()) + Float::with_val(prec, w[big].square_ref())).sqrt();
        let (cr, ci) = (Float::with_val(prec, &u[big] / &mag), -Float::with_val(prec, &w[big] / &mag));
        let re: Vec<Float> =
            (0..n).map(|i| Float::with_val(prec, &u[i] * &cr) - Float::with_val(prec, &w[i] * &ci)).collect();
        let im: Vec<Float> =
            (0..n).map(|i| Float::with_val(prec, &u[i] * &ci) + Float::with_val(prec, &w[i] * &cr)).collect();
        (re, im)
    } else {
        (x.clone(), vec![Float::new(prec); n])
    };
    // residual in real form on the embedded vector (same 2-norm)
    let mut xr = vec![Float::new(prec); m];
    xr[..n].clone_from_slice(&re);
    if embed {
        xr[n..].clone_from_slice(&im);
    }
    let mut ax = vec![Float::new(prec); m];
    matvec(a, &xr, &mut ax);
    matvec(p, &xr, &mut px);
    let mut r2 = Float::new(prec);
    for i in 0..m {
        let r = Float::with_val(prec, &ax[i] - Float::with_val(prec, lambda * &px[i]));
        r2 += &r * &r;
    }
    (EigVec { re, im }, r2.sqrt())
}

/// Solve the pencil of `pair`.
pub fn gevp_solve(pair: &MatrixPair, policy: &PrecisionPolicy, mode: Mode) -> Result<SpectrumResult, Error> {
    policy.validate()?;
    let n = pair.dim();
    let (embed, dropped) = needs_embedding(pair);
    // condition estimate at the element precision
    let (_, p0, m0) = real_form(pair, pair.bits(), false);
    let l0 = cholesky(&p0, m0, m0, pair.bits())?;
    let lmin0 = min_gram_eig(&p0, m0, m0, &l0, pair.bits())?;
    let log10_kappa = (m0 as f64).log10() - lmin0.to_f64().log10();
    let prec = working_bits(policy, log10_kappa);
    let (a, p, m) = real_form(pair, prec, embed);
    let l = cholesky(&p, m, m, prec)?;
    let min_gram = if embed {
        let (_, pp, mm) = real_form(pair, prec, false);
        let ll = cholesky(&pp, mm, mm, prec)?;
        min_gram_eig(&pp, mm, mm, &ll, prec)?
    } else {
        min_gram_eig(&p, m, m, &l, prec)?
    };
    let c = reduce(&l, &a, m, m, prec);
    let mut pairs: Vec<(Float, Vec<Float>)> = match mode {
        Mode::Full => {
            let tol = Float::with_val(prec, 10u32).pow(-(policy.solver_digits as i32) + 5);
            let (ev, v) = jacobi(c, m, prec, &tol, 60)?;
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&i, &j| ev[i].total_cmp(&ev[j]));
            if embed {
                idx = idx.into_iter().step_by(2).collect();
            }
            idx.into_iter()
                .map(|k| {
                    let mut y: Vec<Float> = (0..m).map(|r| v[r * m + k].clone()).collect();
                    backward(&l, m, &mut y);
                    (ev[k].clone(), y)
                })
                .collect()
        }
        Mode::Extremes => {
            let t = tridiagonalize(&c, m, m, prec);
            let tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 24));
            let lo = t.eigenvalue(0, &tol);
            let hi = t.eigenvalue(m - 1, &tol);
            let mut out = Vec::new();
            for lam in [lo, hi] {
                let mut y = t.back_transform(t.eigenvector(&lam));
                backward(&l, m, &mut y);
                out.push((lam, y));
            }
            if n == 1 {
                out.truncate(1);
            }
            out
        }
    };
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut eigenvalues = Vec::new();
    let mut vectors = Vec::new();
    let mut residual_norms = Vec::new();
    for (lam, x) in pairs {
        let (v, r) = finish(x, &lam, &a, &p, m, m, n, embed, prec);
        eigenvalues.push(lam);
        vectors.push(v);
        residual_norms.push(r);
    }
    Ok(SpectrumResult {
        eigenvalues,
        vectors,
        residual_norms,
        min_gram_eig: min_gram,
        working_bits: prec,
        dropped_imag: dropped,
        complex: embed,
    })
}

/// Extreme eigenpairs of every leading block of a pair.
#[derive(Clone, Debug)]
pub struct ExtremePairs {
    pub dim: usize,
    pub lambda_min: Float,
    pub lambda_max: Float,
    pub v_min: EigVec,
    pub v_max: EigVec,
    pub residual_min: Float,
    pub residual_max: Float,
    pub min_gram_eig: Float,
}

/// Solve every leading principal block listed in `dims` with one Cholesky
/// factorization of the full Gram matrix: the leading block of
/// `L⁻¹AL⁻ᵀ` is the reduced problem of the leading sub-pencil.
pub fn sweep_extremes(
    pair: &MatrixPair,
    policy: &PrecisionPolicy,
    dims: &[usize],
    mut progress: impl FnMut(&ExtremePairs),
) -> Result<(Vec<ExtremePairs>, u32, Mag), Error> {
    policy.validate()?;
    let n = pair.dim();
    if dims.iter().any(|&d| d == 0 || d > n) {
        return Err(Error::Domain("sweep block sizes must lie in 1..=N+1".into()));
    }
    let (embed, dropped) = needs_embedding(pair);
    let (_, p0, m0) = real_form(pair, pair.bits(), false);
    let l0 = cholesky(&p0, m0, m0, pair.bits())?;
    let lmin0 = min_gram_eig(&p0, m0, m0, &l0, pair.bits())?;
    let log10_kappa = (m0 as f64).log10() - lmin0.to_f64().log10();
    let prec = working_bits(policy, log10_kappa);
    let (a, p, m) = real_form(pair, prec, embed);
    // reorder embedded indices so that leading blocks stay closed: (0, n, 1, n+1, …)
    let order: Vec<usize> = if embed { (0..n).flat_map(|i| [i, i + n]).collect() } else { (0..n).collect() };
    let perm = |src: &[Float]| {
        let mut out = dense::zeros(m, prec);
        for (i, &oi) in order.iter().enumerate() {
            for (j, &oj) in order.iter().enumerate() {
                out[i * m + j] = src[oi * m + oj].clone();
            }
        }
        out
    };
    let (a, p) = (perm(&a), perm(&p));
    let l = cholesky(&p, m, m, prec)?;
    let c = reduce(&l, &a, m, m, prec);
    let tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 24));
    let mut out = Vec::with_capacity(dims.len());
    for &d in dims {
        let k = if embed { 2 * d } else { d };
        let lk: Vec<Float> = (0..k * k).map(|q| l[(q / k) * m + q % k].clone()).collect();
        let t = tridiagonalize(&c, m, k, prec);
        let lo = t.eigenvalue(0, &tol);
        let hi = t.eigenvalue(k - 1, &tol);
        let mut res = Vec::new();
        for lam in [&lo, &hi] {
            let mut y = t.back_transform(t.eigenvector(lam));
            backward(&lk, k, &mut y);
            // undo the interleaving for `finish`
            let x: Vec<Float> = if embed {
                (0..d).map(|i| y[2 * i].clone()).chain((0..d).map(|i| y[2 * i + 1].clone())).collect()
            } else {
                y
            };
            let (ab, pb, _) = real_form(&pair.leading(d), prec, embed);
            res.push(finish(x, lam, &ab, &pb, k, k, d, embed, prec));
        }
        let mg = if embed {
            let pk: Vec<Float> = (0..d * d).map(|q| p[order_index(q / d, embed) * m + order_index(q % d, embed)].clone()).collect();
            let lpk = cholesky(&pk, d, d, prec)?;
            min_gram_eig(&pk, d, d, &lpk, prec)?
        } else {
            let pk: Vec<Float> = (0..d * d).map(|q| p[(q / d) * m + q % d].clone()).collect();
            min_gram_eig(&pk, d, d, &lk, prec)?
        };
        let (vmax, rmax) = res.pop().expect("two");
        let (vmin, rmin) = res.pop().expect("two");
        let e = ExtremePairs {
            dim: d,
            lambda_min: lo,
            lambda_max: hi,
            v_min: vmin,
            v_max: vmax,
            residual_min: rmin,
            residual_max: rmax,
            min_gram_eig: mg,
        };
        progress(&e);
        out.push(e);
    }
    Ok((out, prec, dropped))
}

/// Position of real-part index `i` in the interleaved ordering.
fn order_index(i: usize, embed: bool) -> usize {
    if embed {
        2 * i
    } else {
        i
    }
}
