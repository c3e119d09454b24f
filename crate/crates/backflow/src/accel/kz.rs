use rug::Float;

use super::RealSequence;
use crate::Error;

/// `k` passes of the centred `m`-point moving average. Only fully supported
/// windows are kept, so each pass trims `(m−1)/2` terms from both ends and
/// the start index moves accordingly.
pub fn kz_filter(x: &RealSequence, m: usize, k: usize) -> Result<RealSequence, Error> {
    if m % 2 == 0 || m == 0 {
        return Err(Error::Domain(format!("KZ window must be odd, got {m}")));
    }
    if k == 0 {
        return Err(Error::Domain("KZ pass count must be positive".into()));
    }
    if x.len() <= k * (m - 1) {
        return Err(Error::Domain(format!(
            "KZ_{{{m},{k}}} needs more than {} terms, got {}",
            k * (m - 1),
            x.len()
        )));
    }
    let prec = x.prec();
    let h = (m - 1) / 2;
    let mut vals = x.values().to_vec();
    let mut start = x.start_index();
    for _ in 0..k {
        let next: Vec<Float> = vals
            .windows(m)
            .map(|w| {
                let mut sum = Float::with_val(prec + 32, 0);
                for v in w {
                    sum += v;
                }
                Float::with_val(prec, sum / m as u32)
            })
            .collect();
        vals = next;
        start += h as u64;
    }
    RealSequence::new(start, vals)
}
