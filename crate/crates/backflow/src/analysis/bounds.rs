use serde::{Deserialize, Serialize};

/// Rigorous upper bound on the single-interval backflow constant.
pub const C_BM_UPPER: f64 = 0.072;

/// Best numerical estimate of the single-interval backflow constant.
pub const C_BM_ESTIMATE: f64 = 0.0384506;

/// Window `[−1 − (M−1)c_hi, M c_hi]` containing the M-fold spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsWindow {
    pub m: usize,
    pub c_hi: f64,
    pub lower: f64,
    pub upper: f64,
    /// For `M = 2`: the sharp overflow edge `−1 − c_BM`, at the estimate of
    /// `c_BM` and at its rigorous upper bound.
    pub c2_over: Option<(f64, f64)>,
}

impl BoundsWindow {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

pub fn bounds_report(m: usize, c_hi: f64) -> BoundsWindow {
    assert!(m >= 1, "M must be at least 1");
    BoundsWindow {
        m,
        c_hi,
        lower: -1.0 - (m as f64 - 1.0) * c_hi,
        upper: m as f64 * c_hi,
        c2_over: (m == 2).then_some((-1.0 - C_BM_ESTIMATE, -1.0 - c_hi)),
    }
}
