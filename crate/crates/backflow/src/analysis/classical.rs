use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::operators::TimeGrid;
use crate::Error;

/// Mass used throughout.
pub const MU: f64 = 0.5;

/// Samples per chunk; each chunk has its own ChaCha stream, so results do
/// not depend on the number of worker threads.
pub const CHUNK: u64 = 8192;

pub type McRng = ChaCha8Rng;

/// A phase-space distribution with `p ≥ 0`.
pub trait Ensemble: Sync {
    fn sample(&self, rng: &mut McRng) -> (f64, f64);
}

impl<F: Fn(&mut McRng) -> (f64, f64) + Sync> Ensemble for F {
    fn sample(&self, rng: &mut McRng) -> (f64, f64) {
        self(rng)
    }
}

/// Built-in ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSpaceEnsemble {
    PointMass { x: f64, p: f64 },
    /// `x ~ N(x_mean, x_sd²)`, `p ~ Exp(mean p_mean)`.
    GaussExp { x_mean: f64, x_sd: f64, p_mean: f64 },
    /// Uniform on `[x_lo, x_hi] × [p_lo, p_hi]`.
    UniformBox { x_lo: f64, x_hi: f64, p_lo: f64, p_hi: f64 },
    /// `x ~ N(x_mean, x_sd²)`, `p ~ Gamma(shape, scale)`.
    GaussGamma { x_mean: f64, x_sd: f64, shape: f64, scale: f64 },
}

impl PhaseSpaceEnsemble {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = match *self {
            PhaseSpaceEnsemble::PointMass { x, p } => x.is_finite() && p >= 0.0 && p.is_finite(),
            PhaseSpaceEnsemble::GaussExp { x_mean, x_sd, p_mean } => {
                x_mean.is_finite() && x_sd > 0.0 && x_sd.is_finite() && p_mean > 0.0 && p_mean.is_finite()
            }
            PhaseSpaceEnsemble::UniformBox { x_lo, x_hi, p_lo, p_hi } => {
                x_lo < x_hi && p_lo >= 0.0 && p_lo < p_hi && x_lo.is_finite() && x_hi.is_finite() && p_hi.is_finite()
            }
            PhaseSpaceEnsemble::GaussGamma { x_mean, x_sd, shape, scale } => {
                x_mean.is_finite() && x_sd > 0.0 && x_sd.is_finite() && shape > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid ensemble parameters: {self:?}")))
        }
    }
}

impl Ensemble for PhaseSpaceEnsemble {
    fn sample(&self, rng: &mut McRng) -> (f64, f64) {
        match *self {
            PhaseSpaceEnsemble::PointMass { x, p } => (x, p),
            PhaseSpaceEnsemble::GaussExp { x_mean, x_sd, p_mean } => {
                let x = Normal::new(x_mean, x_sd).expect("validated").sample(rng);
                (x, Exp::new(1.0 / p_mean).expect("validated").sample(rng))
            }
            PhaseSpaceEnsemble::UniformBox { x_lo, x_hi, p_lo, p_hi } => {
                (rng.sample(Uniform::new(x_lo, x_hi).expect("validated")), rng.sample(Uniform::new(p_lo, p_hi).expect("validated")))
            }
            PhaseSpaceEnsemble::GaussGamma { x_mean, x_sd, shape, scale } => {
                let x = Normal::new(x_mean, x_sd).expect("validated").sample(rng);
                (x, Gamma::new(shape, scale).expect("validated").sample(rng))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEstimate {
    /// `−Prob((x,p) ∈ ⋃_j S_j)`.
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    /// `−Prob((x,p) ∈ S_j)` per interval; the wedges are disjoint, so these
    /// sum to `estimate`.
    pub per_interval: Vec<f64>,
}

/// Index of the wedge `−p t_{2j}/μ ≤ x < −p t_{2j−1}/μ` containing `(x,p)`,
/// i.e. the interval during which the trajectory `x + pt/μ` leaves `x < 0`.
pub fn wedge(times: &[f64], x: f64, p: f64) -> Option<usize> {
    times
        .chunks(2)
        .position(|t| -p * t[1] / MU <= x && x < -p * t[0] / MU)
}

/// Monte-Carlo estimate of the classical flux balance over the grid's
/// intervals, reproducible under `seed`.
pub fn classical_mc(
    ensemble: &impl Ensemble,
    grid: &TimeGrid,
    samples: u64,
    seed: u64,
) -> Result<ClassicalEstimate, Error> {
    if samples == 0 {
        return Err(Error::Domain("classical_mc needs at least one sample".into()));
    }
    let times: Vec<f64> = grid.times().iter().map(|t| t.to_f64()).collect();
    let m = grid.m();
    let chunks = samples.div_ceil(CHUNK);
    let counts: Vec<Result<Vec<u64>, Error>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = McRng::seed_from_u64(seed);
            rng.set_stream(c);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut k = vec![0u64; m];
            for _ in 0..n {
                let (x, p) = ensemble.sample(&mut rng);
                if !(p >= 0.0) || !x.is_finite() || !p.is_finite() {
                    return Err(Error::Domain(format!("ensemble produced (x, p) = ({x}, {p}); need finite x and p ≥ 0")));
                }
                if let Some(j) = wedge(&times, x, p) {
                    k[j] += 1;
                }
            }
            Ok(k)
        })
        .collect();
    let mut total = vec![0u64; m];
    for c in counts {
        for (t, k) in total.iter_mut().zip(c?) {
            *t += k;
        }
    }
    let n = samples as f64;
    let hits: u64 = total.iter().sum();
    let q = hits as f64 / n;
    Ok(ClassicalEstimate {
        estimate: -q,
        std_error: (q * (1.0 - q) / n).sqrt(),
        samples,
        per_interval: total.iter().map(|&k| -(k as f64) / n).collect(),
    })
}
