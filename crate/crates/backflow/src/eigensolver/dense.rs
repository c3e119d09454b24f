//! Dense real symmetric kernels at arbitrary precision. Matrices are
//! row-major `n × n` vectors of `Float`.

use rug::float::Round;
use rug::Float;

use crate::Error;

pub(crate) fn zeros(n: usize, prec: u32) -> Vec<Float> {
    vec![Float::new(prec); n * n]
}

/// Cholesky factor `L` (lower, row-major) of the leading `n × n` block of a
/// matrix with row stride `stride`.
pub(crate) fn cholesky(p: &[Float], stride: usize, n: usize, prec: u32) -> Result<Vec<Float>, Error> {
    let mut l = zeros(n, prec);
    for j in 0..n {
        let mut d = Float::with_val(prec, &p[j * stride + j]);
        for k in 0..j {
            d -= Float::with_val(prec, l[j * n + k].square_ref());
        }
        if d.cmp0() != Some(std::cmp::Ordering::Greater) {
            return Err(Error::CholeskyBreakdown { pivot: j, dim: n });
        }
        let d = d.sqrt();
        for i in j + 1..n {
            let mut s = Float::with_val(prec, &p[i * stride + j]);
            for k in 0..j {
                s -= &l[i * n + k] * &l[j * n + k];
            }
            l[i * n + j] = s / &d;
        }
        l[j * n + j] = d;
    }
    Ok(l)
}

/// Solve `L y = b` in place.
pub(crate) fn forward(l: &[Float], n: usize, b: &mut [Float]) {
    let prec = b.first().map_or(64, |x| x.prec());
    for i in 0..n {
        let mut s = Float::with_val(prec, &b[i]);
        for k in 0..i {
            s -= &l[i * n + k] * &b[k];
        }
        b[i] = s / &l[i * n + i];
    }
}

/// Solve `Lᵀ x = b` in place.
pub(crate) fn backward(l: &[Float], n: usize, b: &mut [Float]) {
    let prec = b.first().map_or(64, |x| x.prec());
    for i in (0..n).rev() {
        let mut s = Float::with_val(prec, &b[i]);
        for k in i + 1..n {
            s -= &l[k * n + i] * &b[k];
        }
        b[i] = s / &l[i * n + i];
    }
}

/// `C = L⁻¹ A L⁻ᵀ` for the symmetric `A` (leading `n × n` block, row stride
/// `stride`), symmetrized.
pub(crate) fn reduce(l: &[Float], a: &[Float], stride: usize, n: usize, prec: u32) -> Vec<Float> {
    // W = L⁻¹ A, column by column (rows of A are columns by symmetry)
    let mut w = zeros(n, prec);
    let mut col = vec![Float::new(prec); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = Float::with_val(prec, &a[i * stride + j]);
        }
        forward(l, n, &mut col);
        for i in 0..n {
            w[i * n + j] = col[i].clone();
        }
    }
    // C = W L⁻ᵀ = (L⁻¹ Wᵀ)ᵀ
    let mut c = zeros(n, prec);
    for i in 0..n {
        for j in 0..n {
            col[j] = w[i * n + j].clone();
        }
        forward(l, n, &mut col);
        for j in 0..n {
            c[j * n + i] = col[j].clone();
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = Float::with_val(prec, &c[i * n + j] + &c[j * n + i]) / 2u32;
            c[i * n + j] = s.clone();
            c[j * n + i] = s;
        }
    }
    c
}

/// Cyclic Jacobi on the symmetric `c` until the off-diagonal Frobenius norm
/// is at most `tol`. Returns eigenvalues (unsorted) and eigenvector columns.
pub(crate) fn jacobi(
    mut c: Vec<Float>,
    n: usize,
    prec: u32,
    tol: &Float,
    max_sweeps: usize,
) -> Result<(Vec<Float>, Vec<Float>), Error> {
    let mut v = zeros(n, prec);
    for i in 0..n {
        v[i * n + i] = Float::with_val(prec, 1);
    }
    let tol2 = Float::with_val(prec, tol.square_ref());
    for _sweep in 0..=max_sweeps {
        let mut off = Float::new(prec);
        for i in 0..n {
            for j in i + 1..n {
                off += Float::with_val(prec, c[i * n + j].square_ref()) * 2u32;
            }
        }
        if off <= tol2 {
            let evals = (0..n).map(|i| c[i * n + i].clone()).collect();
            return Ok((evals, v));
        }
        if _sweep == max_sweeps {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if c[p * n + q].is_zero() {
                    continue;
                }
                // rotation annihilating c[p][q]
                let apq = c[p * n + q].clone();
                let theta = Float::with_val(prec, &c[q * n + q] - &c[p * n + p]) / (Float::with_val(prec, &apq * 2u32));
                let t = {
                    let r = (Float::with_val(prec, theta.square_ref()) + 1u32).sqrt();
                    let den = Float::with_val(prec, theta.abs_ref()) + r;
                    let t = Float::with_val(prec, 1u32) / den;
                    if theta.is_sign_negative() { -t } else { t }
                };
                let cs = Float::with_val(prec, 1u32) / (Float::with_val(prec, t.square_ref()) + 1u32).sqrt();
                let sn = Float::with_val(prec, &t * &cs);
                let tau = Float::with_val(prec, &sn / Float::with_val(prec, &cs + 1u32));
                let app = Float::with_val(prec, &c[p * n + p] - Float::with_val(prec, &t * &apq));
                let aqq = Float::with_val(prec, &c[q * n + q] + Float::with_val(prec, &t * &apq));
                c[p * n + p] = app;
                c[q * n + q] = aqq;
                c[p * n + q] = Float::new(prec);
                c[q * n + p] = Float::new(prec);
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = c[r * n + p].clone();
                    let arq = c[r * n + q].clone();
                    let nrp = Float::with_val(prec, &arp - Float::with_val(prec, &sn * Float::with_val(prec, &arq + Float::with_val(prec, &tau * &arp))));
                    let nrq = Float::with_val(prec, &arq + Float::with_val(prec, &sn * Float::with_val(prec, &arp - Float::with_val(prec, &tau * &arq))));
                    c[r * n + p] = nrp.clone();
                    c[p * n + r] = nrp;
                    c[r * n + q] = nrq.clone();
                    c[q * n + r] = nrq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p].clone();
                    let vrq = v[r * n + q].clone();
                    v[r * n + p] = Float::with_val(prec, &vrp - Float::with_val(prec, &sn * Float::with_val(prec, &vrq + Float::with_val(prec, &tau * &vrp))));
                    v[r * n + q] = Float::with_val(prec, &vrq + Float::with_val(prec, &sn * Float::with_val(prec, &vrp - Float::with_val(prec, &tau * &vrq))));
                }
            }
        }
    }
    Err(Error::IterationCeiling(format!("Jacobi did not converge in {max_sweeps} sweeps")))
}

/// Householder tridiagonalization of the leading `k × k` block of the
/// symmetric `c` (row stride `stride`).
pub(crate) struct Tridiag {
    pub diag: Vec<Float>,
    pub off: Vec<Float>,
    /// Reflectors `(v, β)` with `H = I − β v vᵀ`, acting on indices `j+1..`.
    refl: Vec<(Vec<Float>, Float)>,
}

pub(crate) fn tridiagonalize(c: &[Float], stride: usize, k: usize, prec: u32) -> Tridiag {
    let mut a = zeros(k, prec);
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = Float::with_val(prec, &c[i * stride + j]);
        }
    }
    let mut refl = Vec::new();
    for j in 0..k.saturating_sub(2) {
        let m = k - j - 1;
        // x = a[j+1.., j]
        let mut norm2 = Float::new(prec);
        for i in 0..m {
            norm2 += &a[(j + 1 + i) * k + j] * &a[(j + 1 + i) * k + j];
        }
        if norm2.is_zero() {
            refl.push((vec![Float::new(prec); m], Float::new(prec)));
            continue;
        }
        let norm = norm2.clone().sqrt();
        let x0 = a[(j + 1) * k + j].clone();
        let alpha = if x0.is_sign_negative() { norm.clone() } else { -norm.clone() };
        let mut v: Vec<Float> = (0..m).map(|i| a[(j + 1 + i) * k + j].clone()).collect();
        v[0] = Float::with_val(prec, &x0 - &alpha);
        // β = 2 / vᵀv with vᵀv = 2(norm² − α x0)
        let vtv = Float::with_val(prec, &norm2 - Float::with_val(prec, &alpha * &x0)) * 2u32;
        let beta = Float::with_val(prec, 2u32) / vtv;
        // p = β A' v on the trailing block
        let mut p = vec![Float::new(prec); m];
        for r in 0..m {
            let row = (j + 1 + r) * k + j + 1;
            let mut s = Float::new(prec);
            for c2 in 0..m {
                s += &a[row + c2] * &v[c2];
            }
            p[r] = s * &beta;
        }
        // w = p − (β pᵀv / 2) v
        let mut pv = Float::new(prec);
        for r in 0..m {
            pv += &p[r] * &v[r];
        }
        let kf = Float::with_val(prec, &beta * &pv) / 2u32;
        let w: Vec<Float> = (0..m).map(|r| Float::with_val(prec, &p[r] - Float::with_val(prec, &kf * &v[r]))).collect();
        for r in 0..m {
            let row = (j + 1 + r) * k + j + 1;
            for c2 in 0..=r {
                let mut val = a[row + c2].clone();
                val -= &v[r] * &w[c2];
                val -= &w[r] * &v[c2];
                a[(j + 1 + c2) * k + j + 1 + r] = val.clone();
                a[row + c2] = val;
            }
        }
        a[(j + 1) * k + j] = alpha.clone();
        a[j * k + j + 1] = alpha;
        for i in 1..m {
            a[(j + 1 + i) * k + j] = Float::new(prec);
            a[j * k + j + 1 + i] = Float::new(prec);
        }
        refl.push((v, beta));
    }
    let diag = (0..k).map(|i| a[i * k + i].clone()).collect();
    let off = (0..k.saturating_sub(1)).map(|i| a[(i + 1) * k + i].clone()).collect();
    Tridiag { diag, off, refl }
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: &Float) -> usize {
        let prec = x.prec();
        let n = self.len();
        let tiny = Float::with_val(prec, Float::i_exp(1, -(prec as i32) * 2));
        let mut count = 0;
        let mut q = Float::with_val(prec, &self.diag[0] - x);
        for i in 0..n {
            if i > 0 {
                let e2 = Float::with_val(prec, self.off[i - 1].square_ref());
                q = Float::with_val(prec, &self.diag[i] - x) - e2 / &q;
            }
            if q.is_zero() {
                q = tiny.clone();
            }
            if q.is_sign_negative() {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn bounds(&self) -> (Float, Float) {
        let prec = self.diag[0].prec();
        let n = self.len();
        let mut lo = Float::with_val(prec, f64::INFINITY);
        let mut hi = Float::with_val(prec, f64::NEG_INFINITY);
        for i in 0..n {
            let mut r = Float::new(prec);
            if i > 0 {
                r += Float::with_val(prec, self.off[i - 1].abs_ref());
            }
            if i + 1 < n {
                r += Float::with_val(prec, self.off[i].abs_ref());
            }
            let l = Float::with_val_round(prec, &self.diag[i] - &r, Round::Down).0;
            let h = Float::with_val_round(prec, &self.diag[i] + &r, Round::Up).0;
            if l < lo {
                lo = l;
            }
            if h > hi {
                hi = h;
            }
        }
        (lo - 1u32, hi + 1u32)
    }

    /// The `idx`-th smallest eigenvalue (0-based) by bisection to width `tol`.
    pub fn eigenvalue(&self, idx: usize, tol: &Float) -> Float {
        let (mut lo, mut hi) = self.bounds();
        let prec = lo.prec();
        loop {
            let w = Float::with_val(prec, &hi - &lo);
            if w <= *tol {
                break;
            }
            let mid = Float::with_val(prec, &lo + &hi) / 2u32;
            if mid == lo || mid == hi {
                break;
            }
            if self.count_below(&mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Float::with_val(prec, &lo + &hi) / 2u32
    }

    /// Eigenvector for an accurate eigenvalue `lambda` by inverse iteration
    /// with partial pivoting, normalized to unit 2-norm.
    pub fn eigenvector(&self, lambda: &Float) -> Vec<Float> {
        let prec = lambda.prec();
        let n = self.len();
        if n == 1 {
            return vec![Float::with_val(prec, 1)];
        }
        // LU of T − λI with row interchanges (banded: d, du, du2, dl)
        let mut d: Vec<Float> = self.diag.iter().map(|x| Float::with_val(prec, x - lambda)).collect();
        let mut dl: Vec<Float> = self.off.clone();
        let mut du: Vec<Float> = self.off.clone();
        let mut du2 = vec![Float::new(prec); n.saturating_sub(2)];
        let mut piv = vec![false; n];
        let tiny = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 8));
        for i in 0..n - 1 {
            if Float::with_val(prec, d[i].abs_ref()) >= Float::with_val(prec, dl[i].abs_ref()) {
                if d[i].is_zero() {
                    d[i] = tiny.clone();
                }
                let f = Float::with_val(prec, &dl[i] / &d[i]);
                dl[i] = f.clone();
                d[i + 1] -= Float::with_val(prec, &f * &du[i]);
            } else {
                let f = Float::with_val(prec, &d[i] / &dl[i]);
                d[i] = dl[i].clone();
                dl[i] = f.clone();
                let tmp = du[i].clone();
                du[i] = d[i + 1].clone();
                d[i + 1] = Float::with_val(prec, &tmp - Float::with_val(prec, &f * &d[i + 1]));
                if i + 2 < n {
                    du2[i] = du[i + 1].clone();
                    du[i + 1] = -Float::with_val(prec, &f * &du[i + 1]);
                }
                piv[i] = true;
            }
        }
        if d[n - 1].is_zero() {
            d[n - 1] = tiny.clone();
        }
        let mut y = vec![Float::with_val(prec, 1); n];
        for _ in 0..3 {
            // forward: apply L⁻¹ with interchanges
            for i in 0..n - 1 {
                if piv[i] {
                    y.swap(i, i + 1);
                    let t = Float::with_val(prec, &dl[i] * &y[i]);
                    y[i + 1] -= t;
                } else {
                    let t = Float::with_val(prec, &dl[i] * &y[i]);
                    y[i + 1] -= t;
                }
            }
            // back: U x = y
            for i in (0..n).rev() {
                let mut s = y[i].clone();
                if i + 1 < n {
                    s -= &du[i] * &y[i + 1];
                }
                if i + 2 < n {
                    s -= &du2[i] * &y[i + 2];
                }
                y[i] = s / &d[i];
            }
            let mut nrm = Float::new(prec);
            for v in &y {
                nrm += Float::with_val(prec, v.square_ref());
            }
            let nrm = nrm.sqrt();
            for v in y.iter_mut() {
                *v /= &nrm;
            }
        }
        y
    }

    /// Map a tridiagonal eigenvector back: `x = H_0 H_1 ⋯ y`.
    pub fn back_transform(&self, mut y: Vec<Float>) -> Vec<Float> {
        let prec = y.first().map_or(64, |x| x.prec());
        for (j, (v, beta)) in self.refl.iter().enumerate().rev() {
            let mut s = Float::new(prec);
            for (i, vi) in v.iter().enumerate() {
                s += vi * &y[j + 1 + i];
            }
            s *= beta;
            for (i, vi) in v.iter().enumerate() {
                y[j + 1 + i] -= Float::with_val(prec, &s * vi);
            }
        }
        y
    }
}
