use std::f64::consts::PI;
use std::sync::OnceLock;

use backflow::analysis::*;
use backflow::mpcore::Real;
use backflow::operators::{build_pair, equal_spacing_grid, BasisSpec, ElementCache, MatrixPair, TimeGrid};
use backflow::quad::{gauss_legendre, integrate};
use backflow::Error;
use proptest::prelude::*;
use rug::Float;

const N_SWEEP: usize = 30;

fn sweep_m1() -> &'static (SpectrumSweep, MatrixPair) {
    static S: OnceLock<(SpectrumSweep, MatrixPair)> = OnceLock::new();
    S.get_or_init(|| {
        let setup = SweepSetup::default_for(1, N_SWEEP).unwrap();
        let pair = build_pair(&setup.grid, &setup.spec, &setup.policy, &ElementCache::disabled()).unwrap();
        let s = sweep_pair(&setup, &pair, |_| {}).unwrap();
        (s, pair)
    })
}

fn grid(ts: &[f64]) -> TimeGrid {
    TimeGrid::new(ts.iter().map(|&t| Real::from_f64(t)).collect()).unwrap()
}

#[test]
fn sweep_is_monotone_and_inside_the_window() {
    let (s, _) = sweep_m1();
    assert_eq!(s.records.len(), N_SWEEP);
    assert_eq!(s.records[0].n, 1);
    assert!(s.monotonicity_violations().is_empty());
    let w = bounds_report(1, C_BM_UPPER);
    for r in &s.records {
        assert!(w.contains(r.lambda_back.to_f64()) && w.contains(r.lambda_over.to_f64()));
        assert!(r.lambda_over.to_f64() >= -1.0 - 1e-20);
        assert!(r.cert_back > 0.0 && r.cert_back < 1e-20);
        assert!(r.cert_over > 0.0 && r.cert_over < 1e-20);
    }
    let l = s.last().lambda_back.to_f64();
    assert!(l > 0.03 && l < 0.03846, "λ_back({N_SWEEP}) = {l}");
}

#[test]
fn sweep_matches_the_resumed_cached_run() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ElementCache::open(dir.path()).unwrap();
    let setup = SweepSetup::default_for(1, 12).unwrap();
    let first = spectrum_sweep(&setup, &cache, |_| {}).unwrap();
    let mut seen = Vec::new();
    let second = spectrum_sweep(&setup, &cache, |r| seen.push(r.n)).unwrap();
    assert_eq!(seen, (1..=12).collect::<Vec<_>>());
    assert_eq!(first.to_csv(), second.to_csv());
    // the first 12 rows of the N = 30 sweep agree within certificates
    let (big, _) = sweep_m1();
    for (a, b) in first.records.iter().zip(&big.records) {
        let d = Float::with_val(64, &a.lambda_back - &b.lambda_back).abs().to_f64();
        assert!(d <= a.cert_back + b.cert_back);
    }
}

#[test]
fn csv_round_trip_and_rejection() {
    let (s, _) = sweep_m1();
    let text = s.to_csv();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# backflow-sweep-v1"));
    assert_eq!(lines.next(), Some("N,lambda_back,lambda_over,cert_back,cert_over"));
    let rows = read_sweep_csv(&text).unwrap();
    assert_eq!(rows.len(), N_SWEEP);
    assert_eq!(write_sweep_csv(&rows), text);
    let r = &rows[N_SWEEP - 1];
    let prec = s.working_bits;
    let back = r.lambda_back(prec).unwrap();
    let diff = Float::with_val(prec, &back - &s.last().lambda_back).abs();
    assert!(diff.to_f64() < 10f64.powi(-(s.csv_digits() as i32) + 2));
    assert_eq!(r.cert_back().unwrap(), s.last().cert_back);

    assert!(read_sweep_csv("N,lambda_back\n1,2\n").is_err());
    let bad = text.replacen("N,lambda_back", "N,lambda_bak", 1);
    assert!(read_sweep_csv(&bad).is_err());
    let bad = format!("{text}7,0.1,x,1e-3,1e-3\n");
    assert!(matches!(read_sweep_csv(&bad), Err(Error::Parse(_))));
}

#[test]
fn sweep_vectors_have_continuous_phase() {
    let (s, pair) = sweep_m1();
    let spec = &s.setup.spec;
    for w in s.records.windows(2) {
        for (a, b) in [(&w[0].v_back, &w[1].v_back), (&w[0].v_over, &w[1].v_over)] {
            let d = eigvec_distance((spec, a), (spec, b), pair).unwrap();
            let plus = p_dist_signed(pair, a, b);
            assert!((d - plus).abs() < 1e-12, "phase not aligned at N = {}", w[1].n);
        }
    }
    // first vector: largest coefficient is positive
    let v = &s.records[0].v_back;
    let k = (0..v.len()).max_by(|&i, &j| v.re[i].to_f64().abs().total_cmp(&v.re[j].to_f64().abs())).unwrap();
    assert!(v.re[k].to_f64() > 0.0);
}

/// `√((v_A − v_B)†P(v_A − v_B))` without any sign choice, in f64.
fn p_dist_signed(pair: &MatrixPair, a: &backflow::eigensolver::EigVec, b: &backflow::eigensolver::EigVec) -> f64 {
    let n = a.len().max(b.len());
    let at = |v: &backflow::eigensolver::EigVec, i: usize| if i < v.len() { v.re[i].clone() } else { Float::new(256) };
    let u: Vec<Float> = (0..n).map(|i| Float::with_val(512, at(a, i) - at(b, i))).collect();
    let mut s = Float::new(512);
    for i in 0..n {
        for j in 0..n {
            s += Float::with_val(512, &u[i] * &u[j]) * pair.p(i, j);
        }
    }
    s.sqrt().to_f64()
}

#[test]
fn distance_axioms() {
    let (s, pair) = sweep_m1();
    let spec = &s.setup.spec;
    let v = |n: usize| &s.record(n).unwrap().v_back;
    assert!(eigvec_distance((spec, v(10)), (spec, v(10)), pair).unwrap() < 1e-30);
    let (d1, d2, d3) = (
        eigvec_distance((spec, v(10)), (spec, v(20)), pair).unwrap(),
        eigvec_distance((spec, v(20)), (spec, v(30)), pair).unwrap(),
        eigvec_distance((spec, v(10)), (spec, v(30)), pair).unwrap(),
    );
    assert_eq!(d1, eigvec_distance((spec, v(20)), (spec, v(10)), pair).unwrap());
    assert!(d3 <= d1 + d2 + 1e-15);
    // the distance of unit vectors never exceeds √2
    assert!(d1 > 0.0 && d1 <= 2f64.sqrt());
    // successive distances shrink on average
    let early = eigvec_distance((spec, v(5)), (spec, v(6)), pair).unwrap();
    let late = eigvec_distance((spec, v(29)), (spec, v(30)), pair).unwrap();
    assert!(late < early, "{late} vs {early}");

    let other = BasisSpec::new(Real::ratio_over_pi(4, 1), Real::ratio(-1, 4), N_SWEEP).unwrap();
    assert!(matches!(eigvec_distance((&other, v(3)), (spec, v(3)), pair), Err(Error::Domain(_))));
}

#[test]
fn profiles_are_normalized_and_shaped() {
    let (s, _) = sweep_m1();
    let spec = &s.setup.spec;
    // ∫|ψ|² dp with p = s⁴ (the p^{−1/2} endpoint behaviour becomes smooth)
    let r = s.record(8).unwrap();
    let norm = integrate(
        |t| {
            let p = t.powi(4);
            let v = eigvec_profile(&r.v_back, spec, &[p], ProfileScale::None).unwrap()[0];
            [(v.re * v.re + v.im * v.im) * 4.0 * t.powi(3)]
        },
        1e-12,
        (200f64).powf(0.25),
        1e-10,
        400,
    );
    assert!((norm.value[0] - 1.0).abs() < 1e-7, "{}", norm.value[0]);

    // overflow vector peaks near 1.5 N
    let ps: Vec<f64> = (1..=1000).map(|k| k as f64 * 0.1).collect();
    for n in [20, 30] {
        let pr = eigvec_profile(&s.record(n).unwrap().v_over, spec, &ps, ProfileScale::None).unwrap();
        let pk = pr.iter().max_by(|a, b| a.re.abs().total_cmp(&b.re.abs())).unwrap().p;
        assert!((pk / n as f64 - 1.5).abs() < 0.15, "N = {n}: peak at {pk}");
    }

    // scaling
    let a = eigvec_profile(&r.v_back, spec, &[2.0], ProfileScale::None).unwrap()[0];
    let b = eigvec_profile(&r.v_back, spec, &[2.0], ProfileScale::P34).unwrap()[0];
    assert!((b.re - a.re * 2f64.powf(0.75)).abs() < 1e-14 * a.re.abs().max(1.0));

    assert!(eigvec_profile(&r.v_back, spec, &[0.0], ProfileScale::None).is_err());
    assert!(eigvec_profile(&r.v_back, spec, &[-1.0], ProfileScale::None).is_err());
}

#[test]
fn backflow_vector_diverges_like_p_to_minus_quarter() {
    let (s, _) = sweep_m1();
    let ps: Vec<f64> = (0..=30).map(|k| 10f64.powf(-4.0 + 0.1 * k as f64)).collect();
    let pr = eigvec_profile(&s.last().v_back, &s.setup.spec, &ps, ProfileScale::None).unwrap();
    let x: Vec<f64> = pr.iter().map(|q| q.p.ln()).collect();
    let y: Vec<f64> = pr.iter().map(|q| q.re.abs().ln()).collect();
    let slope = ls_slope(&x, &y);
    assert!((slope + 0.25).abs() <= 0.1, "slope {slope}");
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn g_kernel_properties() {
    for m in 1..=9 {
        for k in 0..=20000 {
            let x = -10.0 + k as f64 * 1e-3;
            let g = g_kernel(m, x);
            assert!(g.abs() <= 1.0 + 1e-15, "g_{m}({x}) = {g}");
            // agrees with the defining quotient away from its zeros
            let den = 2.0 * m as f64 * x * x.cos();
            if den.abs() > 1e-3 {
                assert!((g - (2.0 * m as f64 * x).sin() / den).abs() < 1e-11);
            }
        }
        assert_eq!(g_kernel(m, 0.0), 1.0);
        // limit at π/2: −(−1)^M · 2/π
        let want = -(if m % 2 == 0 { 1.0 } else { -1.0 }) * 2.0 / PI;
        assert!((g_kernel(m, PI / 2.0) - want).abs() < 1e-13);
    }
    assert_eq!(chebyshev_u(0, 0.3), 1.0);
    assert!((chebyshev_u(3, 0.3) - (8.0 * 0.027 - 4.0 * 0.3)).abs() < 1e-15);
}

#[test]
fn s_and_k_constants() {
    assert_eq!(s_function(0.0), 1.0);
    let c = s_and_k();
    assert!(s_function(c.eta0) > 0.0 && s_function(c.eta0 * (1.0 + 1e-12)) < 0.0);
    // two significant figures
    assert_eq!(format!("{:.1e}", c.eta0), "4.6e-3");
    assert_eq!(format!("{:.1e}", c.k), "2.1e-4");
    // finer digits from an independent root/max search
    assert!((c.eta0 - 0.004609416868416).abs() < 1e-14);
    assert!((c.k - 2.132768196809e-4).abs() < 1e-15);
    assert!(c.eps_star > 0.0 && c.eps_star < PI * c.eta0);
}

/// `⟨ψ_M|Cψ_M⟩` straight from the time-domain kernel of the grid with
/// `T = 2`, `−(1/4π)Σ_k ∫ e^{it(p−q)} dt · ((p/q)^{1/4} + (q/p)^{1/4})`,
/// by a tensor Gauss–Legendre rule.
fn trial_oracle(m: usize, eps: f64) -> f64 {
    let g = equal_spacing_grid(m, &Real::int(2)).unwrap();
    let ts: Vec<(f64, f64)> = g.intervals().map(|(a, b)| (a.to_f64(), b.to_f64())).collect();
    let time_int = |x: f64| -> f64 {
        ts.iter()
            .map(|&(a, b)| {
                if x == 0.0 {
                    b - a
                } else {
                    2.0 * (0.5 * (a + b) * x).cos() * (0.5 * (b - a) * x).sin() / x
                }
            })
            .sum()
    };
    let rule = gauss_legendre(48, 64);
    let nodes: Vec<(f64, f64)> =
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| (0.5 * (x.to_f64() + 1.0), 0.5 * w.to_f64())).collect();
    let l = eps / m as f64;
    let h = eps / (2.0 * m as f64);
    // (q, weight·dq/du) on I₀ via q = Lu⁴ and on I₁ linearly
    let mut pts = Vec::new();
    for &(u, w) in &nodes {
        pts.push((l * u.powi(4), w * 4.0 * l * u.powi(3)));
    }
    for &(u, w) in &nodes {
        pts.push((PI / 2.0 - h + 2.0 * h * u, w * 2.0 * h));
    }
    let mut s = 0.0;
    for &(p, wp) in &pts {
        for &(q, wq) in &pts {
            let r = (p / q).powf(0.25);
            s += wp * wq * time_int(p - q) * (r + 1.0 / r);
        }
    }
    -(m as f64 / (2.0 * eps)) * s / (4.0 * PI)
}

#[test]
fn trial_state_matches_the_kernel_oracle_and_bounds() {
    for m in [2, 4, 8] {
        for eps in [0.05, 0.1, PI / 6.0] {
            let r = trial_state_expectation(m, eps).unwrap();
            assert!(r.warning.is_none());
            let o = trial_oracle(m, eps);
            assert!((r.value - o).abs() < 1e-9 * r.value.abs().max(1e-3), "M={m} ε={eps}: {} vs {o}", r.value);
            assert!(r.holds(), "M={m} ε={eps}: {} < {}", r.value, r.bound);
            assert!(r.value <= m as f64 * C_BM_UPPER);
            assert!((r.bound - trial_state_bound(m, eps)).abs() == 0.0);
        }
    }
    // a case where the analytic bound is positive
    let r = trial_state_expectation(8, 0.05).unwrap();
    assert!(r.bound > 0.0 && r.value > r.bound);
    assert!(trial_state_expectation(3, 0.1).is_err());
    assert!(trial_state_expectation(2, 0.6).is_err());
    assert!(trial_state_expectation(2, 0.0).is_err());
}

#[test]
fn trial_state_is_normalized() {
    let st = TrialState::new(4, 0.2).unwrap();
    let (a, b) = st.i0();
    let (c, d) = st.i1();
    let h = st.eval(0.5 * (a + b));
    assert_eq!(h, st.eval(0.5 * (c + d)));
    assert!(((b - a) * h * h + (d - c) * h * h - 1.0).abs() < 1e-13);
    assert_eq!(st.eval(1.0), 0.0);
}

#[test]
fn classical_point_mass() {
    let g = grid(&[-1.5, -0.5, 0.5, 1.5]);
    let e = classical_mc(&PhaseSpaceEnsemble::PointMass { x: 1.0, p: 1.0 }, &g, 100, 1).unwrap();
    assert_eq!(e.estimate, -1.0);
    assert_eq!(e.std_error, 0.0);
    assert_eq!(e.per_interval, vec![-1.0, 0.0]);
    // crossing after the last interval: no contribution
    let e = classical_mc(&PhaseSpaceEnsemble::PointMass { x: -4.0, p: 1.0 }, &g, 10, 1).unwrap();
    assert_eq!(e.estimate, 0.0);
    assert_eq!(wedge(&[-1.5, -0.5, 0.5, 1.5], -2.0, 1.0), Some(1));
    assert_eq!(wedge(&[-1.5, -0.5, 0.5, 1.5], -1.0, 1.0), None);
    assert_eq!(wedge(&[-1.5, -0.5, 0.5, 1.5], 0.0, 1.0), None);
    // zero momentum never crosses
    assert_eq!(wedge(&[-1.5, -0.5], 0.0, 0.0), None);
}

#[test]
fn classical_errors_and_reproducibility() {
    let g = grid(&[-1.5, -0.5]);
    let ens = PhaseSpaceEnsemble::GaussExp { x_mean: 0.0, x_sd: 1.0, p_mean: 1.0 };
    assert!(classical_mc(&ens, &g, 0, 1).is_err());
    assert!(TimeGrid::new(vec![]).is_err());
    let neg = |_: &mut McRng| (0.0, -1.0);
    assert!(matches!(classical_mc(&neg, &g, 10, 1), Err(Error::Domain(_))));
    assert!(PhaseSpaceEnsemble::UniformBox { x_lo: 0.0, x_hi: 1.0, p_lo: -1.0, p_hi: 1.0 }.validate().is_err());
    let a = classical_mc(&ens, &g, 30_000, 9).unwrap();
    let b = classical_mc(&ens, &g, 30_000, 9).unwrap();
    let c = classical_mc(&ens, &g, 30_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.estimate, c.estimate);
}

fn phi(z: f64) -> f64 {
    0.5 * Float::with_val(64, -z / 2f64.sqrt()).erfc().to_f64()
}

#[test]
fn classical_matches_the_exact_wedge_probability() {
    // P = ∫ λe^{−λp} [Φ((−pt₁/μ − x₀)/σ) − Φ((−pt₂/μ − x₀)/σ)] dp
    let (x0, sd, pm) = (0.3, 1.2, 0.8);
    let (t1, t2) = (-1.5, -0.5);
    let exact = integrate(
        |p| {
            let f = (-p / pm).exp() / pm;
            [f * (phi((-p * t1 / MU - x0) / sd) - phi((-p * t2 / MU - x0) / sd))]
        },
        0.0,
        60.0 * pm,
        1e-13,
        500,
    )
    .value[0];
    let e = classical_mc(&PhaseSpaceEnsemble::GaussExp { x_mean: x0, x_sd: sd, p_mean: pm }, &grid(&[t1, t2]), 200_000, 3)
        .unwrap();
    assert!((e.estimate + exact).abs() <= 4.0 * e.std_error, "{} vs {}", e.estimate, -exact);
}

#[test]
fn classical_wedges_are_disjoint() {
    let ens = PhaseSpaceEnsemble::GaussExp { x_mean: -0.5, x_sd: 2.0, p_mean: 1.5 };
    let two = classical_mc(&ens, &grid(&[-1.5, -0.5, 0.5, 1.5]), 50_000, 4).unwrap();
    let sum: f64 = two.per_interval.iter().sum();
    assert!((two.estimate - sum).abs() < 1e-15);
    // same samples on each interval alone
    let first = classical_mc(&ens, &grid(&[-1.5, -0.5]), 50_000, 4).unwrap();
    let second = classical_mc(&ens, &grid(&[0.5, 1.5]), 50_000, 4).unwrap();
    assert_eq!(first.estimate, two.per_interval[0]);
    assert_eq!(second.estimate, two.per_interval[1]);
    // the union over [−3/2, 3/2] contains both wedges
    let union = classical_mc(&ens, &grid(&[-1.5, 1.5]), 50_000, 4).unwrap();
    assert!(two.estimate.abs() <= union.estimate.abs());
}

#[test]
fn bounds_window() {
    let w = bounds_report(1, C_BM_UPPER);
    assert_eq!((w.lower, w.upper), (-1.0, 0.072));
    assert!(w.c2_over.is_none());
    let w = bounds_report(2, C_BM_UPPER);
    assert_eq!(w.lower, -1.0 - C_BM_UPPER);
    assert_eq!(w.c2_over, Some((-1.0 - C_BM_ESTIMATE, -1.0 - C_BM_UPPER)));
    let w = bounds_report(4, 0.05);
    assert!((w.lower + 1.15).abs() < 1e-15 && (w.upper - 0.2).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classical_estimates_stay_in_range(
        x0 in -3.0f64..3.0, sd in 0.1f64..3.0, pm in 0.1f64..3.0, m in 1usize..4, seed in 0u64..1000,
    ) {
        let g = equal_spacing_grid(m, &Real::int(1)).unwrap();
        let e = classical_mc(&PhaseSpaceEnsemble::GaussExp { x_mean: x0, x_sd: sd, p_mean: pm }, &g, 4000, seed).unwrap();
        prop_assert!(e.estimate <= 0.0 && e.estimate >= -1.0);
        prop_assert!((e.per_interval.iter().sum::<f64>() - e.estimate).abs() < 1e-12);
    }

    #[test]
    fn trial_inequality_on_random_parameters(half_m in 1usize..6, eps in 0.01f64..(PI / 6.0)) {
        let r = trial_state_expectation(2 * half_m, eps).unwrap();
        prop_assert!(r.holds());
    }
}
