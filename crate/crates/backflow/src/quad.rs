//! Quadrature rules: adaptive Gauss–Kronrod in double precision and cached
//! high-precision Gauss–Legendre nodes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rug::Float;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of an adaptive integration of an `N`-component integrand.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    /// Estimated absolute error (max over components).
    pub error: f64,
    pub converged: bool,
}

fn gk15<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for i in 0..N {
        k[i] = WGK[7] * fc[i];
        g[i] = WG[3] * fc[i];
    }
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        for i in 0..N {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..N {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).abs());
    }
    (k, err)
}

/// Globally adaptive G7–K15 integration of `f` over `[a, b]` to absolute
/// tolerance `tol`, bisecting the worst interval up to `max_intervals` times.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> QuadResult<N> {
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.3).sum();
        if total <= tol || parts.len() >= max_intervals {
            let mut value = [0.0; N];
            for p in &parts {
                for i in 0..N {
                    value[i] += p.2[i];
                }
            }
            return QuadResult { value, error: total, converged: total <= tol };
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` at `bits` of precision.
/// Nodes are ascending. Each node is accurate to a few ulps.
pub struct GaussLegendre {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

type GlCache = Mutex<HashMap<(usize, u32), Arc<GaussLegendre>>>;

fn gl_cache() -> &'static GlCache {
    static CACHE: OnceLock<GlCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `(P_k(x), P_k'(x))` by the three-term recurrence.
fn legendre(k: usize, x: &Float, prec: u32) -> (Float, Float) {
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    for j in 2..=k {
        let j = j as u32;
        let t = Float::with_val(prec, x * &p1) * (2 * j - 1) - Float::with_val(prec, &p0 * (j - 1));
        p0 = p1;
        p1 = t / j;
    }
    // P_k' = k (x P_k − P_{k−1}) / (x² − 1)
    let num = (Float::with_val(prec, x * &p1) - &p0) * k as u32;
    let den = Float::with_val(prec, x * x) - 1u32;
    (p1, num / den)
}

/// Cached `k`-point Gauss–Legendre rule.
pub fn gauss_legendre(k: usize, bits: u32) -> Arc<GaussLegendre> {
    if let Some(r) = gl_cache().lock().expect("poisoned").get(&(k, bits)) {
        return r.clone();
    }
    let rule = Arc::new(compute_gl(k, bits));
    gl_cache().lock().expect("poisoned").insert((k, bits), rule.clone());
    rule
}

fn compute_gl(k: usize, bits: u32) -> GaussLegendre {
    let prec = bits + 32;
    let half = k / 2;
    let mut pos = Vec::with_capacity(half + 1);
    for i in 0..(k + 1) / 2 {
        // Tricomi initial guess, polished in f64 then at full precision
        let theta = std::f64::consts::PI * (4 * i + 3) as f64 / (4 * k + 2) as f64;
        let kf = k as f64;
        let mut x0 = (1.0 - (kf - 1.0) / (8.0 * kf * kf * kf)) * theta.cos();
        for _ in 0..8 {
            let (p, d) = legendre(k, &Float::with_val(64, x0), 64);
            x0 -= (p / d).to_f64();
        }
        let mut x = Float::with_val(prec, x0);
        let mut p_used = 64u32;
        loop {
            p_used = (p_used * 2).min(prec);
            x.set_prec(p_used);
            let (p, d) = legendre(k, &x, p_used);
            let step = Float::with_val(p_used, &p / &d);
            x -= &step;
            if p_used == prec {
                let tiny = step.is_zero() || step.get_exp().unwrap_or(i32::MIN) < -(prec as i32) + 4;
                if tiny {
                    break;
                }
            }
        }
        let (_, d) = legendre(k, &x, prec);
        let one_m = Float::with_val(prec, 1u32) - Float::with_val(prec, &x * &x);
        let w = Float::with_val(prec, 2u32) / (one_m * Float::with_val(prec, &d * &d));
        pos.push((x, w));
    }
    let mut nodes = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    // pos[i] are descending positive nodes (x ≈ cos θ_i)
    for (x, w) in pos.iter().take(half) {
        nodes.push(Float::with_val(bits, -x));
        weights.push(Float::with_val(bits, w));
    }
    if k % 2 == 1 {
        nodes.push(Float::with_val(bits, 0));
        weights.push(Float::with_val(bits, &pos[half].1));
    }
    for (x, w) in pos.iter().take(half).rev() {
        nodes.push(Float::with_val(bits, x));
        weights.push(Float::with_val(bits, w));
    }
    GaussLegendre { nodes, weights }
}
