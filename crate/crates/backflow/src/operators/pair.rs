use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;

use super::basis::{gram_matrix, lgamma_f64, BasisSpec};
use super::cache::{CacheKey, CacheRecord, ElementCache};
use super::grid::TimeGrid;
use crate::mpcore::{float_to_decimal, lgamma_ball, Ball, Mag, PrecisionPolicy};
use crate::quad::gauss_legendre;
use crate::Error;

/// Hermitian compressed operator `A` and Gram matrix `P` sharing one
/// element-wise radius. Entries are stored row-major as midpoints.
#[derive(Clone, Debug)]
pub struct MatrixPair {
    dim: usize,
    bits: u32,
    a_re: Vec<Float>,
    a_im: Vec<Float>,
    p: Vec<Float>,
    /// Uniform bound on `‖ΔA‖_∞` and `‖ΔP‖_∞`.
    pub element_radius: Mag,
    pub grid: TimeGrid,
    pub spec: BasisSpec,
    pub policy: PrecisionPolicy,
}

impl MatrixPair {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn a_re(&self, m: usize, n: usize) -> &Float {
        &self.a_re[m * self.dim + n]
    }

    pub fn a_im(&self, m: usize, n: usize) -> &Float {
        &self.a_im[m * self.dim + n]
    }

    pub fn p(&self, m: usize, n: usize) -> &Float {
        &self.p[m * self.dim + n]
    }

    /// Element `A_mn` as a ball.
    pub fn a_ball(&self, m: usize, n: usize) -> crate::mpcore::CBall {
        crate::mpcore::CBall::new(
            Ball::new(self.a_re(m, n).clone(), self.element_radius.clone()),
            Ball::new(self.a_im(m, n).clone(), self.element_radius.clone()),
        )
    }

    /// True if every imaginary part vanishes within the element radius.
    pub fn is_real(&self) -> bool {
        self.a_im.iter().all(|x| Mag::from_float(x) <= self.element_radius)
    }

    /// `max |Im A_mn|`.
    pub fn max_imag(&self) -> Mag {
        self.a_im.iter().fold(Mag::zero(), |m, x| m.max(&Mag::from_float(x)))
    }

    /// `‖A − A†‖_∞` on the midpoints.
    pub fn hermiticity_defect(&self) -> Mag {
        let mut worst = Mag::zero();
        for m in 0..self.dim {
            for n in 0..self.dim {
                let dr = Float::with_val(self.bits, self.a_re(m, n) - self.a_re(n, m));
                let di = Float::with_val(self.bits, self.a_im(m, n) + self.a_im(n, m));
                worst = worst.max(&Mag::from_float(&dr)).max(&Mag::from_float(&di));
            }
        }
        worst
    }

    /// The leading principal `(k × k)` pair (basis nesting).
    pub fn leading(&self, k: usize) -> MatrixPair {
        assert!(k >= 1 && k <= self.dim, "leading block size out of range");
        let take = |v: &Vec<Float>| {
            (0..k)
                .flat_map(|m| (0..k).map(move |n| (m, n)))
                .map(|(m, n)| v[m * self.dim + n].clone())
                .collect::<Vec<_>>()
        };
        MatrixPair {
            dim: k,
            bits: self.bits,
            a_re: take(&self.a_re),
            a_im: take(&self.a_im),
            p: take(&self.p),
            element_radius: self.element_radius.clone(),
            grid: self.grid.clone(),
            spec: self.spec.with_n(k - 1),
            policy: self.policy.clone(),
        }
    }

    /// Assemble a pair from explicit midpoints (tests and small experiments).
    pub fn from_parts(
        a_re: Vec<Float>,
        a_im: Vec<Float>,
        p: Vec<Float>,
        element_radius: Mag,
        grid: TimeGrid,
        spec: BasisSpec,
        policy: PrecisionPolicy,
    ) -> Result<MatrixPair, Error> {
        let dim = (p.len() as f64).sqrt().round() as usize;
        if dim * dim != p.len() || a_re.len() != p.len() || a_im.len() != p.len() || dim == 0 {
            return Err(Error::Domain("matrix pair parts must be square and of equal size".into()));
        }
        let bits = p.iter().chain(&a_re).map(|x| x.prec()).max().unwrap_or(64);
        Ok(MatrixPair { dim, bits, a_re, a_im, p, element_radius, grid, spec, policy })
    }
}

/// Significant digits stored per cached midpoint.
fn stored_digits(policy: &PrecisionPolicy) -> usize {
    (policy.element_digits.max(policy.target_exp) + 5) as usize
}

/// Build the `(N+1)×(N+1)` pair, reading elements from and inserting them
/// into `cache`. Midpoints always pass through the cache's decimal form, so
/// results do not depend on whether the cache was warm.
pub fn build_pair(
    grid: &TimeGrid,
    spec: &BasisSpec,
    policy: &PrecisionPolicy,
    cache: &ElementCache,
) -> Result<MatrixPair, Error> {
    spec.validate()?;
    policy.validate()?;
    let dim = spec.dim();
    let bits = policy.element_bits();
    let digits = policy.element_digits;
    let keys: Vec<(usize, usize, u32)> =
        (0..dim).flat_map(|m| (m..dim).map(move |n| (m, n, digits))).collect();
    let mut store = cache.store(grid, spec)?;
    let mut records: Vec<Option<CacheRecord>> = match &store {
        Some(s) => s.get_many(&keys)?,
        None => vec![None; keys.len()],
    };
    if records.iter().any(Option::is_none) {
        let computed = assemble(grid, spec, policy)?;
        let sd = stored_digits(policy);
        let fresh: Vec<CacheRecord> = keys
            .iter()
            .map(|&(m, n, d)| {
                let (re, im) = (&computed.re[m * dim + n], &computed.im[m * dim + n]);
                to_record(grid, spec, m, n, d, re, im, &computed.radius, sd)
            })
            .collect();
        if let Some(s) = store.as_mut() {
            let missing: Vec<CacheRecord> = records
                .iter()
                .zip(&fresh)
                .filter(|(r, _)| r.is_none())
                .map(|(_, f)| f.clone())
                .collect();
            s.append(&missing)?;
        }
        for (r, f) in records.iter_mut().zip(fresh) {
            if r.is_none() {
                *r = Some(f);
            }
        }
    }
    let mut a_re = vec![Float::new(bits); dim * dim];
    let mut a_im = vec![Float::new(bits); dim * dim];
    let mut radius = Mag::zero();
    for (&(m, n, _), rec) in keys.iter().zip(&records) {
        let rec = rec.as_ref().expect("filled above");
        let (re, im, rad) = parse_record(rec, bits)?;
        radius = radius.max(&rad);
        a_im[n * dim + m] = Float::with_val(bits, -&im);
        a_re[n * dim + m] = re.clone();
        a_re[m * dim + n] = re;
        a_im[m * dim + n] = im;
    }
    if dim > 0 {
        for m in 0..dim {
            a_im[m * dim + m] = Float::new(bits);
        }
    }
    let pb = gram_matrix(dim, &spec.delta, bits)?;
    let mut p = Vec::with_capacity(dim * dim);
    for b in pb {
        radius = radius.max(b.rad());
        p.push(b.mid().clone());
    }
    Ok(MatrixPair {
        dim,
        bits,
        a_re,
        a_im,
        p,
        element_radius: radius,
        grid: grid.clone(),
        spec: spec.clone(),
        policy: policy.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn to_record(
    grid: &TimeGrid,
    spec: &BasisSpec,
    m: usize,
    n: usize,
    digits: u32,
    re: &Float,
    im: &Float,
    radius: &Mag,
    sd: usize,
) -> CacheRecord {
    let (rs, is) = if m == n {
        (float_to_decimal(re, sd), "0".to_string())
    } else {
        (float_to_decimal(re, sd), float_to_decimal(im, sd))
    };
    // decimal rounding adds at most |x|·10^{1−sd}
    let big = Mag::from_float(re).max(&Mag::from_float(im));
    let rad = radius.add(&big.mul(&Mag::pow10_neg(sd as i64 - 1)));
    CacheRecord {
        key: CacheKey {
            grid_hash: grid.hash(),
            a: spec.a.to_string(),
            delta: spec.delta.to_string(),
            m,
            n,
            digits,
        },
        re: rs,
        im: is,
        rad_exp: rad.decimal_exponent(),
    }
}

fn parse_record(rec: &CacheRecord, bits: u32) -> Result<(Float, Float, Mag), Error> {
    let bad = |r: &str| Error::CacheIntegrity { key: rec.key.to_string(), reason: r.into() };
    let re = Float::parse(&rec.re).map_err(|_| bad("unparsable real part"))?;
    let im = Float::parse(&rec.im).map_err(|_| bad("unparsable imaginary part"))?;
    let re = Float::with_val(bits, re);
    let im = Float::with_val(bits, im);
    let rad = Mag::pow10_neg(-rec.rad_exp).add(&Mag::ulp(&re)).add(&Mag::ulp(&im));
    Ok((re, im, rad))
}

/// Midpoints of the full upper-and-lower `A` and a uniform radius.
pub(crate) struct Assembled {
    pub re: Vec<Float>,
    pub im: Vec<Float>,
    pub radius: Mag,
}

/// One Gauss–Legendre panel `[c − h, c + h]` in the angle variable.
#[derive(Clone, Copy, Debug)]
struct Panel {
    h: f64,
    k: usize,
    log_err: f64,
}

/// Natural log of the Bernstein-ellipse error bound for one panel at
/// ellipse parameter `ρ = e^u` with `k` nodes.
fn panel_log_bound(c: f64, h: f64, u: f64, k: usize, env: &BoundEnv) -> Option<f64> {
    let x = c.abs() + h * u.cosh();
    if x >= FRAC_PI_2 - 1e-9 {
        return None;
    }
    let y = h * u.sinh();
    let lch = y.cosh().ln();
    let n = env.n as f64;
    let delta_term = if env.delta >= 0.0 { 2.0 * env.delta * lch } else { 2.0 * env.delta * x.cos().ln() };
    // sup |f| on the ellipse
    let log_m = env.log_cmax2 + (2.0 / (4.0 * PI)).ln() + PI * env.delta.abs() + delta_term
        + 2.0 * n * lch
        + (n + 0.5) * y;
    let rho2m1 = (2.0 * u).exp_m1();
    Some((64.0f64 / 15.0).ln() + h.ln() + log_m - 2.0 * k as f64 * u - rho2m1.ln())
}

struct BoundEnv {
    n: usize,
    delta: f64,
    log_cmax2: f64,
}

/// Fewest nodes for a single panel meeting `log_tol`, if achievable.
fn best_single(c: f64, h: f64, log_tol: f64, env: &BoundEnv) -> Option<Panel> {
    let mut best: Option<Panel> = None;
    let mut u = 0.02;
    while u < 6.0 {
        if let Some(b0) = panel_log_bound(c, h, u, 0, env) {
            let k = ((b0 - log_tol) / (2.0 * u)).ceil().max(1.0) as usize;
            if k <= 20_000 && best.is_none_or(|p| k < p.k) {
                let log_err = panel_log_bound(c, h, u, k, env).expect("admissible");
                best = Some(Panel { h, k, log_err });
            }
        }
        u += 0.02;
    }
    best
}

/// Panels covering `[lo, hi]` with few total nodes, each within its share of
/// `tol` (proportional to its length).
fn plan(lo: f64, hi: f64, log_tol_density: f64, env: &BoundEnv, depth: u32) -> Option<Vec<Panel>> {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let single = best_single(c, h, log_tol_density + (2.0 * h).ln(), env);
    if depth == 0 {
        return single.map(|p| vec![p]);
    }
    let split = plan(lo, c, log_tol_density, env, depth - 1)
        .zip(plan(c, hi, log_tol_density, env, depth - 1))
        .map(|(mut a, b)| {
            a.extend(b);
            a
        });
    match (single, split) {
        (Some(s), Some(sp)) => {
            if sp.iter().map(|p| p.k).sum::<usize>() < s.k {
                Some(sp)
            } else {
                Some(vec![s])
            }
        }
        (s, sp) => s.map(|p| vec![p]).or(sp),
    }
}

/// Coefficients `c_k^± = 2^{k+δ+½} Γ(k+δ±¼+1)/√Γ(2k+2δ+1)` on balls.
fn coefficients(dim: usize, delta: &Ball, plus: bool) -> Result<Vec<Ball>, Error> {
    let p = delta.prec();
    let ln2 = Ball::from_i64(2, p).ln()?;
    let shift = if plus { Ball::from_ratio(5, 4, p) } else { Ball::from_ratio(3, 4, p) };
    (0..dim)
        .map(|k| {
            let x = delta.add(&Ball::from_ratio(2 * k as i64 + 1, 2, p));
            let l = x
                .mul(&ln2)
                .add(&lgamma_ball(&delta.add(&shift).add_i64(k as i64))?)
                .sub(&lgamma_ball(&x.mul_2exp(1))?.mul_2exp(-1));
            Ok(l.exp())
        })
        .collect()
}

/// Compute every `A_mn` by Gauss–Legendre quadrature of the angle form
/// `J = a^{−μ} ∫ cos^{α+β}θ e^{i(α−β)θ} dθ` (`t = a tan θ`), with a rigorous
/// Bernstein-ellipse truncation bound and an a-priori rounding bound.
pub(crate) fn assemble(grid: &TimeGrid, spec: &BasisSpec, policy: &PrecisionPolicy) -> Result<Assembled, Error> {
    let dim = spec.dim();
    let n_max = spec.n;
    let bits = policy.element_bits();
    let wp = bits;
    let delta_f = spec.delta.to_f64();
    let d_ball = spec.delta.ball(wp + 16);
    let cp = coefficients(dim, &d_ball, true)?;
    let cm = coefficients(dim, &d_ball, false)?;
    // log c_max from an f64 scan, padded
    let log_c = |k: usize, s: f64| {
        let x = k as f64 + delta_f + 0.5;
        x * 2f64.ln() + lgamma_f64(k as f64 + delta_f + s + 1.0) - 0.5 * lgamma_f64(2.0 * x)
    };
    let log_cmax = (0..dim)
        .flat_map(|k| [log_c(k, 0.25), log_c(k, -0.25)])
        .fold(f64::NEG_INFINITY, f64::max)
        + 1e-6;
    let env = BoundEnv { n: n_max, delta: delta_f, log_cmax2: 2.0 * log_cmax };

    let a = spec.a.ball(wp + 16);
    let mut thetas = Vec::new();
    for (s1, s2) in grid.intervals() {
        let t1 = s1.ball(wp + 16).div(&a)?.atan();
        let t2 = s2.ball(wp + 16).div(&a)?.atan();
        thetas.push((t1, t2));
    }
    let total_len: f64 = thetas.iter().map(|(a, b)| b.to_f64() - a.to_f64()).sum();
    let target = policy.target_radius();
    // quadrature truncation gets a quarter of the budget, spread by length
    let log_tol_density = (target.to_f64() * 0.25 / total_len.max(1e-300)).ln();
    if !log_tol_density.is_finite() {
        return Err(Error::Domain("target radius underflows double-precision planning".into()));
    }

    let mut nodes: Vec<(Float, Float)> = Vec::new(); // (θ_j, W_j)
    let mut trunc = Mag::zero();
    let mut theta_absmax = 0f64;
    for (t1, t2) in &thetas {
        let (lo, hi) = (t1.to_f64(), t2.to_f64());
        theta_absmax = theta_absmax.max(lo.abs()).max(hi.abs());
        let panels = plan(lo, hi, log_tol_density, &env, 4)
            .ok_or_else(|| Error::PrecisionExhausted { digits: policy.element_digits, achieved: None })?;
        // exact panel boundaries at working precision
        let width = Float::with_val(wp, t2.mid() - t1.mid());
        let mut left = t1.mid().clone();
        let mut acc = 0.0;
        for p in &panels {
            trunc = trunc.add(&Mag::from_f64(p.log_err.exp() * (1.0 + 1e-9)));
            acc += 2.0 * p.h;
            let right = if (acc - (hi - lo)).abs() < 1e-12 * (hi - lo).max(1e-300) {
                t2.mid().clone()
            } else {
                Float::with_val(wp, &width * Float::with_val(wp, acc / (hi - lo))) + t1.mid()
            };
            let c = Float::with_val(wp, &left + &right) / 2u32;
            let h = Float::with_val(wp, &right - &left) / 2u32;
            let rule = gauss_legendre(p.k, wp);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push((Float::with_val(wp, x * &h) + &c, Float::with_val(wp, w * &h)));
            }
            left = right;
        }
    }
    let k_total = nodes.len();

    let to_f = |b: &Ball| Float::with_val(wp, b.mid());
    let cp: Vec<Float> = cp.iter().map(to_f).collect();
    let cm: Vec<Float> = cm.iter().map(to_f).collect();
    let two_delta = Float::with_val(wp, d_ball.mid() * 2u32);
    let four_pi = Float::with_val(wp, rug::float::Constant::Pi) * 4u32;

    // per node: T^± = g e^{±iθ/2} c^± U (bra side), X^∓ = c^∓ U (ket side)
    struct NodeRow {
        tp: Vec<(Float, Float)>,
        tm: Vec<(Float, Float)>,
        xp: Vec<(Float, Float)>,
        xm: Vec<(Float, Float)>,
    }
    let rows: Vec<NodeRow> = nodes
        .par_iter()
        .map(|(th, w)| {
            let (s, c) = th.clone().sin_cos(Float::new(wp));
            let g = -Float::with_val(wp, c.clone().pow(&two_delta) * w) / &four_pi;
            let half = Float::with_val(wp, th / 2u32);
            let (sh, ch) = half.sin_cos(Float::new(wp));
            // z = cos θ e^{iθ}
            let zr = Float::with_val(wp, &c * &c);
            let zi = Float::with_val(wp, &c * &s);
            let mut u = (Float::with_val(wp, 1), Float::with_val(wp, 0));
            let mut row = NodeRow {
                tp: Vec::with_capacity(dim),
                tm: Vec::with_capacity(dim),
                xp: Vec::with_capacity(dim),
                xm: Vec::with_capacity(dim),
            };
            let gp = (Float::with_val(wp, &g * &ch), Float::with_val(wp, &g * &sh));
            let gm = (gp.0.clone(), Float::with_val(wp, -&gp.1));
            for k in 0..dim {
                let xp = (Float::with_val(wp, &u.0 * &cp[k]), Float::with_val(wp, &u.1 * &cp[k]));
                let xm = (Float::with_val(wp, &u.0 * &cm[k]), Float::with_val(wp, &u.1 * &cm[k]));
                row.tp.push(cmul(&gp, &xp, wp));
                row.tm.push(cmul(&gm, &xm, wp));
                row.xp.push(xp);
                row.xm.push(xm);
                u = cmul(&u, &(zr.clone(), zi.clone()), wp);
            }
            row
        })
        .collect();

    // A_mn = Σ_j T^+_m conj(X^−_n) + T^−_m conj(X^+_n), upper triangle
    let upper: Vec<Vec<(Float, Float)>> = (0..dim)
        .into_par_iter()
        .map(|m| {
            (m..dim)
                .map(|n| {
                    let mut re = Float::new(wp);
                    let mut im = Float::new(wp);
                    for r in &rows {
                        let (tp, tm, xm, xp) = (&r.tp[m], &r.tm[m], &r.xm[n], &r.xp[n]);
                        re += &tp.0 * &xm.0;
                        re += &tp.1 * &xm.1;
                        re += &tm.0 * &xp.0;
                        re += &tm.1 * &xp.1;
                        im += &tp.1 * &xm.0;
                        im -= &tp.0 * &xm.1;
                        im += &tm.1 * &xp.0;
                        im -= &tm.0 * &xp.1;
                    }
                    (re, im)
                })
                .collect()
        })
        .collect();

    // rounding: Σ_j |W_j| sup|f| · 2^{−wp} · (generous operation count)
    let log_f_real = env.log_cmax2 + (2.0 / (4.0 * PI)).ln()
        + if delta_f < 0.0 { 2.0 * delta_f * theta_absmax.cos().ln() } else { 0.0 };
    let count = 4.0 * (k_total as f64 + 10.0 * (n_max as f64 + 5.0) * (2.0 + theta_absmax.tan()));
    let log_round = log_f_real + total_len.ln() + count.ln() - wp as f64 * 2f64.ln();
    // endpoint enclosures of θ
    let theta_rad = thetas.iter().fold(Mag::zero(), |m, (a, b)| m.max(a.rad()).max(b.rad()));
    let radius = trunc
        .add(&Mag::from_f64(log_round.exp() * 2.0))
        .add(&theta_rad.mul_f64(4.0 * log_f_real.exp()));
    if radius > target {
        return Err(Error::PrecisionExhausted {
            digits: policy.element_digits,
            achieved: Some(-radius.log10()),
        });
    }
    let mut re = vec![Float::new(wp); dim * dim];
    let mut im = vec![Float::new(wp); dim * dim];
    for (m, row) in upper.into_iter().enumerate() {
        for (j, (r, i)) in row.into_iter().enumerate() {
            let n = m + j;
            re[n * dim + m] = r.clone();
            im[n * dim + m] = Float::with_val(wp, -&i);
            re[m * dim + n] = r;
            im[m * dim + n] = i;
        }
    }
    Ok(Assembled { re, im, radius })
}

fn cmul(a: &(Float, Float), b: &(Float, Float), wp: u32) -> (Float, Float) {
    let re = Float::with_val(wp, &a.0 * &b.0) - Float::with_val(wp, &a.1 * &b.1);
    let im = Float::with_val(wp, &a.0 * &b.1) + Float::with_val(wp, &a.1 * &b.0);
    (re, im)
}
