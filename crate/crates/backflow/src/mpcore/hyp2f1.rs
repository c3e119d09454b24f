//! Certified Gauss hypergeometric function ₂F₁(a, b; c; z) for real
//! parameters and complex `z` off the cut `[1, ∞)`.
//!
//! Near the origin the Maclaurin series is summed with a rigorous geometric
//! tail bound. Elsewhere the function is continued by Taylor stepping of the
//! hypergeometric ODE along a path from `|z| = 1/2`, carrying `(f, f')` as
//! complex balls and bounding every truncated tail by a majorant recurrence.
//! This handles the region around `1 ± e^{±iπ/3}` where the classical
//! linear transformations all converge slowly.

use rug::Float;

use super::ball::{Ball, CBall, Mag};
use super::escalate;
use super::real::{Cplx, Real};
use crate::Error;

/// Radius of the disc where the Maclaurin series is used directly.
const DIRECT_RADIUS: f64 = 0.5;
/// Step length as a fraction of the distance to the nearest singular point.
const STEP_FRACTION: f64 = 0.3;

fn up_f64(x: &Float) -> f64 {
    x.to_f64_round(rug::float::Round::Up)
}

fn check_params(c: &Ball) -> Result<(), Error> {
    if !c.is_positive() {
        let k = c.mid().to_f64().round();
        if k <= 0.0 && c.contains_float(&Float::with_val(64, k)) {
            return Err(Error::Domain(format!(
                "2F1 undefined: c = {k} is a nonpositive integer"
            )));
        }
    }
    Ok(())
}

fn check_cut(z: &CBall) -> Result<(), Error> {
    if z.im.contains_zero() && z.re.upper() >= 1 {
        return Err(Error::Branch(
            "2F1 argument meets the branch cut [1, ∞)".into(),
        ));
    }
    Ok(())
}

/// Maclaurin sum of `(f, f')` at `z` with `|z| < 1`.
fn series(a: &Ball, b: &Ball, c: &Ball, z: &CBall, bits: u32) -> Result<(CBall, CBall), Error> {
    let absz = up_f64(&z.abs_upper());
    if absz >= 1.0 {
        return Err(Error::Domain("Maclaurin series needs |z| < 1".into()));
    }
    let am1 = up_f64(&a.add_i64(-1).abs_upper());
    let aa = up_f64(&a.abs_upper());
    let bmc = up_f64(&b.sub(c).abs_upper());
    let clo = c.lower().to_f64();
    let mut f = CBall::zero(bits);
    let mut fp = CBall::zero(bits);
    let mut t = CBall::one(bits);
    let tol = Mag::pow2(-(bits as i32) - 2);
    let max_terms = 20 * bits as usize + 40 * (aa as usize + up_f64(&b.abs_upper()) as usize) + 100;
    for k in 0..max_terms {
        let kf = k as f64;
        if clo + kf > 0.0 {
            let q = absz * (1.0 + am1 / (kf + 1.0)) * (1.0 + bmc / (clo + kf)) * (1.0 + 1e-12);
            if q < 0.95 {
                let tk = Mag::from_float(&t.abs_upper());
                let s = 1.0 / (1.0 - q);
                let tail_f = tk.mul_f64(s);
                let cc = 1.0 + bmc / (clo + kf);
                let tail_fp = tk.mul_f64(cc * ((aa + kf) * s + q * s * s) * (1.0 + 1e-12));
                if tail_f.max(&tail_fp) <= tol || tk.is_zero() {
                    f.add_error(&tail_f);
                    fp.add_error(&tail_fp);
                    return Ok((f, fp));
                }
            }
        }
        f = f.add(&t);
        let ak = a.add_i64(k as i64);
        let bk = b.add_i64(k as i64);
        let ck = c.add_i64(k as i64);
        let r = ak.mul(&bk).div(&ck)?;
        let tr = t.mul_real(&r);
        fp = fp.add(&tr);
        t = tr.mul(z).div_i64(k as i64 + 1);
    }
    Err(Error::PrecisionExhausted {
        digits: super::ball::bits_to_digits(bits),
        achieved: None,
    })
}

/// Coefficients of the hypergeometric ODE expanded about `z0`.
struct Ode {
    p0: CBall,
    p1: CBall,
    q0: CBall,
    q1: Ball,
    ab: Ball,
}

impl Ode {
    fn at(a: &Ball, b: &Ball, c: &Ball, z0: &CBall) -> Self {
        let p = z0.prec();
        let one = CBall::one(p);
        let s = a.add(b).add_i64(1);
        Ode {
            p0: z0.mul(&one.sub(z0)),
            p1: one.sub(&z0.mul_i64(2)),
            q0: CBall::from_real(c.clone()).sub(&z0.mul_real(&s)),
            q1: s.neg(),
            ab: a.mul(b),
        }
    }
}

/// One Taylor step of length `h` from `z0`, where `(f0, f1) = (f, f')(z0)`.
fn taylor_step(
    ode: &Ode,
    f0: &CBall,
    f1: &CBall,
    h: &CBall,
    bits: u32,
) -> Result<(CBall, CBall), Error> {
    // scaled coefficients e_k = c_k h^k:
    // e_{k+2} = −[(P1 k + Q0) A e_{k+1}/(k+2) + (−k(k−1) + Q1 k − ab) B e_k/((k+2)(k+1))]
    let amul = h.div(&ode.p0)?;
    let bmul = h.sqr().div(&ode.p0)?;
    let abs_a = up_f64(&amul.abs_upper());
    let abs_b = up_f64(&bmul.abs_upper());
    let abs_p1 = up_f64(&ode.p1.abs_upper());
    let abs_q0 = up_f64(&ode.q0.abs_upper());
    let abs_q1 = up_f64(&ode.q1.abs_upper());
    let abs_ab = up_f64(&ode.ab.abs_upper());
    let tol = Mag::pow2(-(bits as i32) - 2);

    let mut e0 = f0.clone();
    let mut e1 = f1.mul(h);
    let mut s = CBall::zero(bits);
    let mut sd = CBall::zero(bits); // Σ k e_k
    let max_terms = 20 * bits as usize + 20 * (abs_q1 as usize + abs_ab.sqrt() as usize) + 200;
    for k in 0..max_terms {
        let kf = k as f64;
        let alpha = abs_a * (abs_p1 + abs_q0 / (kf + 2.0));
        let beta = abs_b * (1.0 + abs_q1 / (kf + 2.0) + abs_ab / ((kf + 2.0) * (kf + 1.0)));
        let q = (alpha + beta) * (1.0 + 1e-12);
        if q < 0.95 {
            let m = Mag::from_float(&e0.abs_upper()).max(&Mag::from_float(&e1.abs_upper()));
            let inv = 1.0 / (1.0 - q);
            let tail = m.mul_f64(2.0 * inv);
            let tail_d = m.mul_f64(2.0 * ((kf + 1.0) * inv + 2.0 * q * inv * inv) * (1.0 + 1e-12));
            if tail.max(&tail_d) <= tol || m.is_zero() {
                s.add_error(&tail);
                sd.add_error(&tail_d);
                let fp = sd.div(h)?;
                return Ok((s, fp));
            }
        }
        s = s.add(&e0);
        sd = sd.add(&e0.mul_i64(k as i64));
        let k_i = k as i64;
        let c1 = ode.p1.mul_i64(k_i).add(&ode.q0).mul(&amul).mul(&e1).div_i64(k_i + 2);
        let poly = ode.q1.mul_i64(k_i).sub(&ode.ab).add_i64(-k_i * (k_i - 1));
        let c2 = bmul.mul_real(&poly).mul(&e0).div_i64((k_i + 2) * (k_i + 1));
        let e2 = c1.add(&c2).neg();
        e0 = e1;
        e1 = e2;
    }
    Err(Error::PrecisionExhausted {
        digits: super::ball::bits_to_digits(bits),
        achieved: None,
    })
}

fn cabs64(re: f64, im: f64) -> f64 {
    re.hypot(im)
}

/// Waypoints (as f64 pairs) of the continuation path from the direct disc to
/// the midpoint of `z`, excluding the final point.
fn plan_path(zr: f64, zi: f64) -> Vec<(f64, f64)> {
    let mut waypoints = Vec::new();
    if zr > 1.0 {
        // pass above/below the branch point instead of grazing it
        let s = if zi >= 0.0 { 1.0 } else { -1.0 };
        waypoints.push((1.0, 0.8 * s));
    }
    waypoints.push((zr, zi));
    let (wr, wi) = waypoints[0];
    let r = cabs64(wr, wi);
    let start = (DIRECT_RADIUS * wr / r, DIRECT_RADIUS * wi / r);
    let mut pts = vec![start];
    let mut cur = start;
    for (i, &(tr, ti)) in waypoints.iter().enumerate() {
        let last_leg = i + 1 == waypoints.len();
        loop {
            let (dr, di) = (tr - cur.0, ti - cur.1);
            let dist = cabs64(dr, di);
            let rad = cabs64(cur.0, cur.1).min(cabs64(1.0 - cur.0, -cur.1));
            let step = STEP_FRACTION * rad * (1.0 - 1e-9);
            if dist <= step {
                if !last_leg {
                    cur = (tr, ti);
                    pts.push(cur);
                }
                break;
            }
            cur = (cur.0 + dr / dist * step, cur.1 + di / dist * step);
            pts.push(cur);
        }
    }
    pts
}

/// ₂F₁(a, b; c; z) at the working precision of the inputs.
pub fn hyp2f1_ball(a: &Ball, b: &Ball, c: &Ball, z: &CBall) -> Result<CBall, Error> {
    check_params(c)?;
    check_cut(z)?;
    let bits = z.prec().max(a.prec()).max(b.prec()).max(c.prec());
    let absz = up_f64(&z.abs_upper());
    if absz <= DIRECT_RADIUS {
        return Ok(series(a, b, c, z, bits)?.0);
    }
    let (zr, zi) = z.to_c64();
    let pts = plan_path(zr, zi);
    let to_ball = |(r, i): (f64, f64)| {
        CBall::new(
            Ball::exact(Float::with_val(bits, r)),
            Ball::exact(Float::with_val(bits, i)),
        )
    };
    let mut here = to_ball(pts[0]);
    let (mut f, mut fp) = series(a, b, c, &here, bits)?;
    for (i, &p) in pts.iter().enumerate() {
        if i == 0 {
            continue;
        }
        let next = to_ball(p);
        let ode = Ode::at(a, b, c, &here);
        let h = next.sub(&here);
        let r = taylor_step(&ode, &f, &fp, &h, bits)?;
        f = r.0;
        fp = r.1;
        here = next;
    }
    let ode = Ode::at(a, b, c, &here);
    let h = z.sub(&here);
    // guard: the last leg must stay within the step fraction
    let rad = cabs64(here.re.to_f64(), here.im.to_f64())
        .min(cabs64(1.0 - here.re.to_f64(), -here.im.to_f64()));
    if up_f64(&h.abs_upper()) > 0.95 * rad {
        return Err(Error::Domain("continuation path planning failed".into()));
    }
    Ok(taylor_step(&ode, &f, &fp, &h, bits)?.0)
}

/// Certified ₂F₁(a, b; c; z) with `digits` relative digits, escalating the
/// working precision up to `16×` the request.
pub fn hyp2f1(a: &Real, b: &Real, c: &Real, z: &Cplx, digits: u32) -> Result<CBall, Error> {
    {
        let bits = 64;
        check_params(&c.ball(bits))?;
        check_cut(&z.ball(bits))?;
    }
    escalate::complex(digits, 16, |bits| {
        hyp2f1_ball(&a.ball(bits), &b.ball(bits), &c.ball(bits), &z.ball(bits))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Real {
        Real::ratio(p, q)
    }

    #[test]
    fn zero_argument_is_one() {
        let v = hyp2f1(&r(3, 2), &r(-7, 3), &r(5, 4), &Cplx::real(Real::int(0)), 40).unwrap();
        assert!(v.contains(&CBall::one(64)) || v.overlaps(&CBall::one(64)));
    }

    #[test]
    fn log_closed_form_inside_and_outside_disc() {
        // 2F1(1,1;2;z) = −log(1−z)/z
        for (zr, zi) in [(1i64, 2i64), (3, 2), (-3, 1)] {
            let z = Cplx::new(r(zr, 2), r(zi, 2));
            let v = hyp2f1(&Real::int(1), &Real::int(1), &Real::int(2), &z, 40).unwrap();
            let zb = z.ball(300);
            let want = CBall::one(300).sub(&zb).ln().unwrap().neg().div(&zb).unwrap();
            assert!(v.overlaps(&want), "z = {zr}/2 + {zi}/2 i: {v} vs {want}");
        }
    }

    #[test]
    fn branch_cut_rejected() {
        let z = Cplx::real(Real::int(2));
        assert!(matches!(
            hyp2f1(&Real::int(1), &Real::int(1), &Real::int(2), &z, 30),
            Err(Error::Branch(_))
        ));
        assert!(matches!(
            hyp2f1(&Real::int(1), &Real::int(1), &Real::int(-2), &Cplx::real(r(1, 4)), 30),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn path_points_respect_step_rule() {
        for &(zr, zi) in &[(1.9, -0.3), (0.5, 0.86), (1.5, 0.86), (0.01, -0.2), (1.99, 0.01)] {
            let pts = plan_path(zr, zi);
            for w in pts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let rad = cabs64(a.0, a.1).min(cabs64(1.0 - a.0, -a.1));
                assert!(cabs64(b.0 - a.0, b.1 - a.1) <= STEP_FRACTION * rad + 1e-12);
            }
        }
    }
}
