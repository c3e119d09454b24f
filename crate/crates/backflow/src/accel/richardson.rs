use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use super::{exponent, RealSequence};
use crate::mpcore::digits_to_bits;
use crate::Error;

/// `(R_γ x)_n = (2^γ x_{2n} − x_n)/(2^γ − 1)` for every `n` with `2n` in range.
pub fn richardson(x: &RealSequence, gamma: f64) -> Result<RealSequence, Error> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("Richardson order must be positive, got {gamma}")));
    }
    if x.len() < 2 {
        return Err(Error::Domain("Richardson extrapolation needs at least two terms".into()));
    }
    let prec = x.prec();
    let w = Float::with_val(prec, 2).pow(&exponent(gamma, prec));
    let den = Float::with_val(prec, &w - 1u32);
    let s = x.start_index();
    let mut out = Vec::new();
    let mut n = s;
    while let Some(x2n) = x.get(2 * n) {
        let xn = x.get(n).expect("n ≤ 2n is in range");
        let num = Float::with_val(prec, &w * x2n) - xn;
        out.push(num / &den);
        n += 1;
    }
    if out.is_empty() {
        return Err(Error::Domain(format!("no index n ≥ {s} has 2n ≤ {}", x.end_index())));
    }
    RealSequence::new(s, out)
}

/// Exponents `0 = γ₁ < γ₂ < … < γ_k` and subsample factors `1 = r₁ < … < r_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLadder {
    gammas: Vec<f64>,
    r: Vec<u64>,
}

impl PowerLadder {
    /// Ladder with the default factors `r = (1, 2, …, k)`.
    pub fn new(gammas: Vec<f64>) -> Result<Self, Error> {
        let r = (1..=gammas.len() as u64).collect();
        PowerLadder::with_factors(gammas, r)
    }

    pub fn with_factors(gammas: Vec<f64>, r: Vec<u64>) -> Result<Self, Error> {
        if gammas.len() < 2 {
            return Err(Error::Domain("a ladder needs at least two exponents".into()));
        }
        if gammas[0] != 0.0 {
            return Err(Error::Domain(format!("the first exponent must be 0, got {}", gammas[0])));
        }
        if gammas.iter().any(|g| !g.is_finite()) || gammas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!("ladder exponents must be strictly increasing: {gammas:?}")));
        }
        if r.len() != gammas.len() || r[0] != 1 || r.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "subsample factors must be strictly increasing integers starting at 1, one per exponent: {r:?}"
            )));
        }
        Ok(PowerLadder { gammas, r })
    }

    /// Parse a comma-separated list of exponents (`"0,0.5,1"`). A leading 0
    /// is inserted if absent.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let mut g = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad ladder exponent: {t}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if g.first() != Some(&0.0) {
            g.insert(0, 0.0);
        }
        PowerLadder::new(g)
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn factors(&self) -> &[u64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }
}

/// Weights `v` solving `Σ_j v_j r_j^{−γ_i} = [i = 1]` at `prec` bits, by
/// Gaussian elimination with partial pivoting.
pub fn ladder_weights(ladder: &PowerLadder, prec: u32) -> Result<Vec<Float>, Error> {
    let k = ladder.len();
    let mut m: Vec<Vec<Float>> = ladder
        .gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let ge = exponent(g, prec);
            let mut row: Vec<Float> = ladder
                .r
                .iter()
                .map(|&r| Float::with_val(prec, r).pow(Float::with_val(prec, -&ge)))
                .collect();
            row.push(Float::with_val(prec, u32::from(i == 0)));
            row
        })
        .collect();
    let tiny = Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 2));
    for c in 0..k {
        let p = (c..k)
            .max_by(|&i, &j| m[i][c].clone().abs().total_cmp(&m[j][c].clone().abs()))
            .expect("nonempty");
        if Float::with_val(prec, m[p][c].abs_ref()) <= tiny {
            return Err(Error::Domain("singular ladder system (repeated exponents?)".into()));
        }
        m.swap(c, p);
        for i in c + 1..k {
            let f = Float::with_val(prec, &m[i][c] / &m[c][c]);
            for j in c..=k {
                let t = Float::with_val(prec, &f * &m[c][j]);
                m[i][j] -= t;
            }
        }
    }
    let mut v = vec![Float::new(prec); k];
    for i in (0..k).rev() {
        let mut s = m[i][k].clone();
        for j in i + 1..k {
            s -= &m[i][j] * &v[j];
        }
        v[i] = s / &m[i][i];
    }
    Ok(v)
}

/// `(R_{γ,r} x)_n = Σ_j v_j x_{n r_j}` for every `n` with `n r_k` in range.
/// The weights are solved with 20 extra digits.
pub fn generalized_richardson(x: &RealSequence, ladder: &PowerLadder) -> Result<RealSequence, Error> {
    let rk = *ladder.r.last().expect("ladders are nonempty");
    if (x.len() as u64) < rk {
        return Err(Error::Domain(format!("sequence of length {} is shorter than r_k = {rk}", x.len())));
    }
    let prec = x.prec();
    let v = ladder_weights(ladder, prec + digits_to_bits(20))?;
    let s = x.start_index();
    let mut out = Vec::new();
    let mut n = s;
    while (n * rk) as i64 <= x.end_index() {
        let mut acc = Float::new(prec + digits_to_bits(20));
        for (vj, &rj) in v.iter().zip(&ladder.r) {
            acc += vj * x.get(n * rj).expect("in range");
        }
        out.push(Float::with_val(prec, acc));
        n += 1;
    }
    if out.is_empty() {
        return Err(Error::Domain(format!("no index n ≥ {s} has n·{rk} ≤ {}", x.end_index())));
    }
    RealSequence::new(s, out)
}
