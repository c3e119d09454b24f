use std::f64::consts::PI;

use backflow::eigensolver::{certify, gevp_solve, Mode};
use backflow::mpcore::*;
use backflow::operators::cache;
use backflow::operators::*;
use backflow::quad::integrate;
use backflow::Error;
use proptest::prelude::*;
use rug::Float;

fn grid(s: &str) -> TimeGrid {
    s.parse().unwrap()
}

fn strs(g: &TimeGrid) -> Vec<String> {
    g.times().iter().map(|t| t.to_string()).collect()
}

#[test]
fn srsd_examples() {
    assert!(srsd(&grid("-1,1")).is_empty());
    assert_eq!(srsd(&grid("-3/2,-1/2,1/2,3/2")), vec![1.0, 1.0]);
    assert_eq!(srsd(&grid("0.5,1,3,7")), vec![4.0, 2.0]);
}

#[test]
fn equal_spacing_examples() {
    assert_eq!(strs(&equal_spacing_grid(1, &Real::int(1)).unwrap()), ["-1/2", "1/2"]);
    assert_eq!(strs(&equal_spacing_grid(2, &Real::int(1)).unwrap()), ["-3/2", "-1/2", "1/2", "3/2"]);
    assert_eq!(strs(&equal_spacing_grid(3, &Real::int(2)).unwrap()), ["-5", "-3", "-1", "1", "3", "5"]);
    for m in 1..6 {
        let g = equal_spacing_grid(m, &Real::ratio(7, 3)).unwrap();
        assert!(srsd(&g).iter().all(|&r| r == 1.0));
        assert!(g.is_symmetric());
    }
}

#[test]
fn grids_reject_bad_input() {
    for s in ["1,0", "-1,0,1,2", "1,2,3", "2,1", "-1,1,1,2"] {
        assert!(s.parse::<TimeGrid>().is_err(), "{s}");
    }
}

#[test]
fn basis_examples() {
    let spec = BasisSpec::new(Real::int(1), Real::int(0), 0).unwrap();
    for q in [0.1, 1.0, 3.7] {
        let want = 2f64.sqrt() * (-q as f64).exp();
        assert!((basis_eval(0, &spec, q).unwrap() - want).abs() < 1e-14);
    }
    assert!(matches!(basis_eval(0, &spec, 0.0), Err(Error::Domain(_))));
    assert!(matches!(basis_eval(0, &spec, -1.0), Err(Error::Domain(_))));

    let spec = BasisSpec::default_for(1, 10);
    let a = spec.a.to_f64();
    for n in 0..=10 {
        // normalization, with q = u² to tame the q^{2δ} endpoint behaviour
        let q = integrate(|u| [2.0 * u * basis_eval(n, &spec, u * u).unwrap().powi(2)], 1e-300, 12.0, 1e-13, 4000);
        assert!((q.value[0] - 1.0).abs() < 1e-10, "n = {n}: {}", q.value[0]);
        // the maximum sits at (n + δ)/a
        if n > 0 {
            let peak = (n as f64 - 0.25) / a;
            let f = |q: f64| log_basis_eval(n, &spec, q).unwrap();
            assert!(f(peak) > f(peak * 1.001) && f(peak) > f(peak * 0.999));
        }
    }
    // log-space evaluation survives large n and q
    let big = BasisSpec::default_for(1, 500);
    assert!(log_basis_eval(500, &big, 1000.0).unwrap().is_finite());
    assert!(basis_eval(500, &big, 1000.0).unwrap().is_finite());
}

#[test]
fn gram_examples() {
    let delta = Real::ratio(-1, 4);
    for n in 0..12 {
        let g = gram_element(n, n, &delta, 40).unwrap();
        assert_eq!(g.mid().to_f64(), 1.0);
        assert!(g.rad().is_zero());
    }
    let g = gram_element(0, 1, &delta, 30).unwrap();
    let third = Ball::from_i64(3, 256).sqrt().unwrap().recip().unwrap();
    assert!(g.overlaps(&third));
    assert!(g.rel_log10() < -30.0);
    assert!((g.to_f64() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    // symmetric in its indices
    assert!(gram_element(3, 7, &delta, 30).unwrap().overlaps(&gram_element(7, 3, &delta, 30).unwrap()));
}

#[test]
fn gram_matches_quadrature() {
    // Gram elements never read `a`; any a gives the same quadrature value
    for a in [Real::ratio_over_pi(2, 1), Real::ratio(3, 2)] {
        let spec = BasisSpec::new(a, Real::ratio(-1, 4), 8).unwrap();
        let scale = spec.a.to_f64();
        for m in 0..=8 {
            for n in m..=8 {
                let q = integrate(
                    |u| [2.0 * u * basis_eval(m, &spec, u * u).unwrap() * basis_eval(n, &spec, u * u).unwrap()],
                    1e-300,
                    (60.0 / scale).sqrt(),
                    1e-13,
                    4000,
                );
                let g = gram_element(m, n, &spec.delta, 30).unwrap().to_f64();
                assert!((q.value[0] - g).abs() <= 1e-10, "({m},{n}): {} vs {g}", q.value[0]);
            }
        }
    }
}

/// `∫_{s1}^{s2} (a − it)^{−α−1}(a + it)^{−β−1} dt` in double precision.
fn j_quadrature(s1: f64, s2: f64, alpha: f64, beta: f64, a: f64) -> (f64, f64) {
    let f = |t: f64| {
        let r = (a * a + t * t).powf(-(alpha + beta + 2.0) / 2.0);
        let phase = (alpha - beta) * (t / a).atan();
        [r * phase.cos(), r * phase.sin()]
    };
    let q = integrate(f, s1, s2, 1e-14, 4000);
    assert!(q.converged);
    (q.value[0], q.value[1])
}

#[test]
fn j_examples() {
    let r = |x: f64| Real::from_f64(x);
    let j = j_eval(&r(1.0), &r(2.0), &r(0.25), &r(-0.25), &r(1.0), 30).unwrap();
    let (re, im) = j.to_c64();
    let (qre, qim) = j_quadrature(1.0, 2.0, 0.25, -0.25, 1.0);
    assert!((re - qre).abs() <= 1e-10 && (im - qim).abs() <= 1e-10);

    for (s1, s2) in [(-3.0, -0.5), (-0.7, 2.5), (0.2, 9.0)] {
        let j = j_eval(&r(s1), &r(s2), &r(1.75), &r(0.75), &r(0.6), 30).unwrap();
        let (re, im) = j.to_c64();
        let (qre, qim) = j_quadrature(s1, s2, 1.75, 0.75, 0.6);
        assert!((re - qre).abs() <= 1e-10 && (im - qim).abs() <= 1e-10, "[{s1}, {s2}]");
    }

    // symmetric intervals with α = β give real values
    for s in [0.1, 1.0, 40.0] {
        let j = j_eval(&r(-s), &r(s), &r(0.75), &r(0.75), &r(0.8), 30).unwrap();
        assert!(j.im.to_f64().abs() < 1e-28);
    }

    // the full-line limit 2π(2a)^{−μ}Γ(μ)/(Γ(α+1)Γ(β+1))
    let (alpha, beta, a) = (1.25, 0.75, 0.5);
    let j = j_eval(&r(-1e7), &r(1e7), &r(alpha), &r(beta), &r(a), 30).unwrap();
    let mu = alpha + beta + 1.0;
    let g = |x: f64| Float::with_val(64, x).gamma().to_f64();
    let limit = 2.0 * PI * (2.0 * a).powf(-mu) * g(mu) / (g(alpha + 1.0) * g(beta + 1.0));
    assert!((j.re.to_f64() - limit).abs() < 1e-12);

    assert!(matches!(j_eval(&r(0.0), &r(1.0), &r(0.5), &r(0.5), &r(1.0), 30), Err(Error::Domain(_))));
    assert!(matches!(j_eval(&r(1.0), &r(2.0), &r(-0.75), &r(-0.5), &r(1.0), 30), Err(Error::Domain(_))));
    assert!(matches!(j_eval(&r(2.0), &r(1.0), &r(0.5), &r(0.5), &r(1.0), 30), Err(Error::Domain(_))));
}

#[test]
fn single_interval_element_matches_oracle() {
    let g = equal_spacing_grid(1, &Real::int(1)).unwrap();
    let spec = BasisSpec::default_for(1, 2);
    let pol = PrecisionPolicy::new(30, 30).unwrap();
    let e = mfold_element(0, 0, &g, &spec, &pol).unwrap();
    let o = quadrature_oracle(0, 0, &g, &spec).unwrap();
    assert!(o.warning.is_none());
    assert!((e.re.to_f64() - o.re).abs() <= 1e-8 && (e.im.to_f64() - o.im).abs() <= 1e-8);
    assert!((-1.0..=1.0).contains(&o.re));
    assert!(e.rad().log10() <= -30.0);
}

#[test]
fn oracle_is_hermitian_on_asymmetric_grid() {
    let g = grid("0.5,1,3,7");
    let spec = BasisSpec::default_for(2, 3);
    let x = quadrature_oracle(1, 3, &g, &spec).unwrap();
    let y = quadrature_oracle(3, 1, &g, &spec).unwrap();
    assert!((x.re - y.re).abs() <= 1e-8 && (x.im + y.im).abs() <= 1e-8);
    assert!(x.im.abs() > 1e-4);
}

#[test]
fn elements_are_hermitian_and_real_on_symmetric_grids() {
    let pol = PrecisionPolicy::new(30, 30).unwrap();
    for (g, symmetric) in [(grid("0.5,1,3,7"), false), (equal_spacing_grid(2, &Real::int(1)).unwrap(), true)] {
        let spec = BasisSpec::default_for(g.m(), 6);
        for (m, n) in [(0, 1), (2, 5), (6, 3)] {
            let x = mfold_element(m, n, &g, &spec, &pol).unwrap();
            let y = mfold_element(n, m, &g, &spec, &pol).unwrap();
            assert!(x.overlaps(&y.conj()));
            if symmetric {
                assert!(x.im.contains_zero());
            }
        }
    }
}

#[test]
fn pair_invariants_and_nesting() {
    let g = grid("-1/2,1,3,7");
    let pol = PrecisionPolicy::for_n(10);
    let none = ElementCache::disabled();
    let big = build_pair(&g, &BasisSpec::default_for(2, 10), &pol, &none).unwrap();
    let small = build_pair(&g, &BasisSpec::default_for(2, 2), &pol, &none).unwrap();
    assert!(big.hermiticity_defect() <= big.element_radius.mul_f64(2.0));
    for m in 0..3 {
        for n in 0..3 {
            assert!(big.a_ball(m, n).overlaps(&small.a_ball(m, n)));
            assert_eq!(big.p(m, n), small.p(m, n));
        }
    }
    let lead = big.leading(3);
    assert_eq!(lead.dim(), 3);
    assert_eq!(lead.a_re(2, 1), big.a_re(2, 1));

    let one = build_pair(&equal_spacing_grid(1, &Real::int(1)).unwrap(), &BasisSpec::default_for(1, 0), &pol, &none)
        .unwrap();
    assert_eq!(one.dim(), 1);
    assert_eq!(one.p(0, 0).to_f64(), 1.0);

    let sym = build_pair(&equal_spacing_grid(2, &Real::int(1)).unwrap(), &BasisSpec::default_for(2, 10), &pol, &none)
        .unwrap();
    assert!(sym.max_imag() <= sym.element_radius);
    assert!(sym.is_real());
}

#[test]
fn zero_endpoints_are_rejected() {
    let g = grid("0.5,1,3,7").translate(&Real::ratio(-1, 2));
    assert!(g.is_err() || {
        let g = g.unwrap();
        let spec = BasisSpec::default_for(2, 1);
        matches!(mfold_element(0, 0, &g, &spec, &PrecisionPolicy::default()), Err(Error::Domain(_)))
    });
}

fn extremes(g: &TimeGrid, n: usize) -> (f64, f64) {
    let pol = PrecisionPolicy::for_n(n);
    let pair = build_pair(g, &BasisSpec::default_for(g.m(), n), &pol, &ElementCache::disabled()).unwrap();
    let r = gevp_solve(&pair, &pol, Mode::Extremes).unwrap();
    (r.eigenvalues[0].to_f64(), r.eigenvalues[r.eigenvalues.len() - 1].to_f64())
}

#[test]
fn time_reversed_grid_shares_spectrum() {
    // t ↦ −t conjugates the kernel; the basis is real, so the pencils are conjugate
    let g = grid("-1/2,1,3,7");
    let times: Vec<Real> = g.times().iter().rev().map(Real::neg).collect();
    let rev = TimeGrid::new(times).unwrap();
    let pol = PrecisionPolicy::for_n(6);
    let spec = BasisSpec::default_for(2, 6);
    let none = ElementCache::disabled();
    let pa = build_pair(&g, &spec, &pol, &none).unwrap();
    let pb = build_pair(&rev, &spec, &pol, &none).unwrap();
    assert!(pa.a_ball(1, 4).overlaps(&pb.a_ball(1, 4).conj()));
    let ra = gevp_solve(&pa, &pol, Mode::Full).unwrap();
    let rb = gevp_solve(&pb, &pol, Mode::Full).unwrap();
    let ca = certify(&ra, &pa.element_radius, pa.dim(), 2.0).unwrap();
    let cb = certify(&rb, &pb.element_radius, pb.dim(), 2.0).unwrap();
    for i in 0..pa.dim() {
        let d = Float::with_val(256, &ra.eigenvalues[i] - &rb.eigenvalues[i]).abs().to_f64();
        assert!(d <= ca.total_radius(i) + cb.total_radius(i), "eigenvalue {i}: {d}");
    }
}

#[test]
fn translated_grids_converge_to_the_same_extremes() {
    // translation is a unitary change of basis, so only the limits agree:
    // the finite-N gap between the extreme eigenvalues must shrink
    let g = grid("-1/2,1,3,7");
    let shifted = g.translate(&Real::ratio(3, 4)).unwrap();
    let gap = |n: usize| {
        let (a0, a1) = extremes(&g, n);
        let (b0, b1) = extremes(&shifted, n);
        ((a0 - b0).abs(), (a1 - b1).abs())
    };
    let (lo4, hi4) = gap(4);
    let (lo24, hi24) = gap(24);
    assert!(lo24 < lo4 && hi24 < hi4, "gaps {lo4} {hi4} → {lo24} {hi24}");
}

#[test]
fn cache_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let c = ElementCache::open(dir.path()).unwrap();
    let g = equal_spacing_grid(2, &Real::int(1)).unwrap();
    let pol = PrecisionPolicy::for_n(8);
    let cold = build_pair(&g, &BasisSpec::default_for(2, 8), &pol, &c).unwrap();
    let store = c.store(&g, &BasisSpec::default_for(2, 8)).unwrap().unwrap();
    assert_eq!(store.len(), 9 * 10 / 2);
    let warm = build_pair(&g, &BasisSpec::default_for(2, 8), &pol, &c).unwrap();
    let uncached = build_pair(&g, &BasisSpec::default_for(2, 8), &pol, &ElementCache::disabled()).unwrap();
    for m in 0..9 {
        for n in 0..9 {
            assert_eq!(cold.a_re(m, n), warm.a_re(m, n));
            assert_eq!(cold.a_im(m, n), uncached.a_im(m, n));
            assert_eq!(cold.a_re(m, n), uncached.a_re(m, n));
        }
    }
    assert_eq!(cold.element_radius, warm.element_radius);
    // extending N reuses the stored block
    let ext = build_pair(&g, &BasisSpec::default_for(2, 10), &PrecisionPolicy::for_n(10), &c).unwrap();
    assert_eq!(ext.dim(), 11);
    let report = cache::verify(&c, 1.0).unwrap();
    assert!(report.ok(), "{report:?}");
    assert!(report.sampled > 0);
}

#[test]
fn cache_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let c = ElementCache::open(dir.path()).unwrap();
    let g = equal_spacing_grid(1, &Real::int(1)).unwrap();
    let spec = BasisSpec::default_for(1, 3);
    let pol = PrecisionPolicy::for_n(3);
    build_pair(&g, &spec, &pol, &c).unwrap();
    let path = c.data_files().unwrap().remove(0);
    let text = std::fs::read_to_string(&path).unwrap();
    // change one digit of the first record's real part
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[1].split('\t').map(str::to_string).collect();
    let re = fields[3].clone();
    let pos = re.rfind(|ch: char| ch.is_ascii_digit() && ch != '0').unwrap();
    let flipped = if &re[pos..pos + 1] == "1" { "2" } else { "1" };
    fields[3] = format!("{}{}{}", &re[..pos], flipped, &re[pos + 1..]);
    lines[1] = fields.join("\t");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let report = cache::verify(&c, 1.0).unwrap();
    assert_eq!(report.integrity_failures.len(), 1);
    assert!(!report.ok());
    match build_pair(&g, &spec, &pol, &c) {
        Err(Error::CacheIntegrity { key, .. }) => assert!(key.contains(&g.hash())),
        other => panic!("expected an integrity error, got {:?}", other.map(|p| p.dim())),
    }
    // gc by grid hash drops the store
    let gc = cache::gc(&c, Some(&g.hash())).unwrap();
    assert_eq!(gc.removed_stores.len(), 1);
    assert!(c.data_files().unwrap().is_empty());
}

#[test]
fn torn_append_is_repaired_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let c = ElementCache::open(dir.path()).unwrap();
    let g = equal_spacing_grid(1, &Real::int(1)).unwrap();
    let pol = PrecisionPolicy::for_n(6);
    let full = build_pair(&g, &BasisSpec::default_for(1, 6), &pol, &c).unwrap();
    // simulate a kill in the middle of writing the last record
    let path = c.data_files().unwrap().remove(0);
    let len = std::fs::metadata(&path).unwrap().len();
    std::fs::OpenOptions::new().write(true).open(&path).unwrap().set_len(len - 20).unwrap();
    let resumed = build_pair(&g, &BasisSpec::default_for(1, 6), &pol, &c).unwrap();
    for m in 0..7 {
        for n in 0..7 {
            assert_eq!(full.a_re(m, n), resumed.a_re(m, n));
        }
    }
    let report = cache::verify(&c, 1.0).unwrap();
    assert!(report.ok(), "{report:?}");
    assert_eq!(report.records, 28);
}

#[test]
fn cache_export_import_is_bit_exact() {
    let src = tempfile::tempdir().unwrap();
    let dst = tempfile::tempdir().unwrap();
    let a = ElementCache::open(src.path()).unwrap();
    let b = ElementCache::open(dst.path()).unwrap();
    let pol = PrecisionPolicy::for_n(4);
    build_pair(&equal_spacing_grid(1, &Real::int(1)).unwrap(), &BasisSpec::default_for(1, 4), &pol, &a).unwrap();
    build_pair(&grid("0.5,1,3,7"), &BasisSpec::default_for(2, 3), &pol, &a).unwrap();
    let bundle = src.path().join("bundle.txt");
    let n = cache::export(&a, &bundle).unwrap();
    assert!(n >= 2);
    cache::import(&b, &bundle).unwrap();
    let records = |c: &ElementCache| {
        let mut out: Vec<String> = c
            .stores()
            .unwrap()
            .iter()
            .flat_map(|s| s.all_records().unwrap().0)
            .map(|r| format!("{r:?}"))
            .collect();
        out.sort();
        out
    };
    assert_eq!(records(&a), records(&b));
    assert_eq!(records(&a).len(), 15 + 10);
    // importing twice adds nothing
    cache::import(&b, &bundle).unwrap();
    assert_eq!(records(&b).len(), 25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gram_ignores_a(m in 0usize..20, n in 0usize..20, num in -9i64..9) {
        let d = Real::ratio(num, 20);
        let x = gram_element(m, n, &d, 30).unwrap();
        prop_assert!(x.is_positive() && x.to_f64() <= 1.0 + 1e-15);
        let s1 = BasisSpec::new(Real::int(1), d.clone(), 3).unwrap();
        let s2 = BasisSpec::new(Real::ratio(17, 3), d.clone(), 3).unwrap();
        // rescaling q by a leaves overlaps unchanged
        let q = 0.7;
        let lhs = basis_eval(m, &s1, q).unwrap() * basis_eval(n, &s1, q).unwrap();
        let rhs = basis_eval(m, &s2, q / s2.a.to_f64()).unwrap() * basis_eval(n, &s2, q / s2.a.to_f64()).unwrap() / s2.a.to_f64();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
    }
}
