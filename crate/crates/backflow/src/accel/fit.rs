use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use super::RealSequence;
use crate::Error;

/// Power-law model `x_{N+1} − x_N ≈ βγ N^{−γ−1}` of successive differences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    /// From the log–log least-squares line.
    pub beta: f64,
    pub gamma: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `(γ, ρ(N, N^{γ+2}(x_{N+1} − x_N)))` per grid point.
    pub pearson: Vec<(f64, f64)>,
    /// Grid point with the strongest correlation (sign-adjusted for
    /// decreasing sequences).
    pub pearson_gamma: Option<f64>,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Fit `(β, γ)` from `log|x_{N+1} − x_N|` against `log N` and scan the
/// Pearson coefficient over `gamma_grid`. Indices `N = 0` are skipped.
pub fn exponent_fit(x: &RealSequence, gamma_grid: &[f64]) -> Result<ExponentFit, Error> {
    let prec = x.prec();
    let mut ns = Vec::new();
    let mut diffs = Vec::new();
    let mut log_abs = Vec::new();
    let mut sign = 0i32;
    for ((n, a), (_, b)) in x.iter().zip(x.iter().skip(1)) {
        if n == 0 {
            continue;
        }
        let d = Float::with_val(prec, b - a);
        let s = match d.cmp0() {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        };
        if s == 0 || (sign != 0 && s != sign) {
            return Err(Error::FitRejected(format!("sequence is not strictly monotone at index {n}")));
        }
        sign = s;
        ns.push(n as f64);
        log_abs.push(d.clone().abs().ln().to_f64());
        diffs.push(d);
    }
    if ns.len() < 3 {
        return Err(Error::FitRejected("need at least three successive differences".into()));
    }
    let logn: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let k = logn.len() as f64;
    let mx = logn.iter().sum::<f64>() / k;
    let my = log_abs.iter().sum::<f64>() / k;
    let sxy: f64 = logn.iter().zip(&log_abs).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = logn.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let gamma = -slope - 1.0;
    let beta = sign as f64 * intercept.exp() / gamma;

    let mut table = Vec::with_capacity(gamma_grid.len());
    for &g in gamma_grid {
        let mu: Vec<f64> = ns
            .iter()
            .zip(&diffs)
            .map(|(&n, d)| {
                let w = Float::with_val(prec, n).pow(g + 2.0);
                Float::with_val(prec, w * d).to_f64()
            })
            .collect();
        table.push((g, pearson(&ns, &mu)));
    }
    let pearson_gamma = table
        .iter()
        .filter(|p| p.1.is_finite())
        .max_by(|a, b| (sign as f64 * a.1).total_cmp(&(sign as f64 * b.1)))
        .map(|p| p.0);
    Ok(ExponentFit { beta, gamma, slope, intercept, pearson: table, pearson_gamma })
}
