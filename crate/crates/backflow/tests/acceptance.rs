//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line; the
//! tolerances are the constants below.
//!
//! Run with `cargo test -p backflow --test acceptance -- --nocapture` to see
//! the lines. The N = 500 tier is `#[ignore]`d (hours of CPU time).

use backflow::accel::*;
use backflow::analysis::*;
use backflow::eigensolver::*;
use backflow::mpcore::*;
use backflow::operators::*;
use backflow::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::Float;

const ORACLE_TOL_ACC: f64 = 1e-8;
const GRAM_DIGITS: u32 = 30;
const GRAM_QUAD_TOL: f64 = 1e-10;
const BACK60_BAND: (f64, f64) = (0.030, 0.03846);
const OVER_FLOOR_EXCESS: &str = "1e-20";
const M2_BACK_MIN: f64 = 0.0385;
const M2_OVER_MAX: f64 = -1.0;
const CERT_CASES: usize = 100;
const EXACT_TOL: f64 = 1e-60;
const LADDER_TOL: f64 = 1e-60;
const C_BM_REF: f64 = 0.0384506;
const GAMMA_TOL: f64 = 0.05;
const FIT_FROM: u64 = 20;
const MC_SAMPLES: u64 = 100_000;
const MC_SIGMAS: f64 = 4.0;
const PREC: u32 = 256;

fn line(pass: bool, name: &str, detail: impl std::fmt::Display) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn fl(x: f64) -> Float {
    Float::with_val(PREC, x)
}

fn seq(start: u64, len: usize, f: impl Fn(u64) -> Float) -> RealSequence {
    RealSequence::new(start, (start..start + len as u64).map(f).collect()).unwrap()
}

/// `n^{−γ}` with `γ` read as the decimal it is written as.
fn npow(n: u64, g: &str) -> Float {
    let g = Float::with_val(PREC, Float::parse(g).unwrap());
    Float::with_val(PREC, n).pow(-g)
}

fn max_dev(x: &RealSequence, want: impl Fn(u64) -> Float) -> f64 {
    x.iter().map(|(n, v)| Float::with_val(PREC, v - want(n)).abs().to_f64()).fold(0.0, f64::max)
}

#[test]
fn oracle_equivalence() {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0, 0);
    for m_int in [1usize, 2] {
        let grid = equal_spacing_grid(m_int, &Real::int(1)).unwrap();
        let spec = BasisSpec::default_for(m_int, 6);
        let pol = PrecisionPolicy::new(30, 30).unwrap();
        for m in 0..=6 {
            for n in 0..=6 {
                let e = mfold_element(m, n, &grid, &spec, &pol).unwrap();
                let o = quadrature_oracle(m, n, &grid, &spec).unwrap();
                let d = (e.re.to_f64() - o.re).abs().max((e.im.to_f64() - o.im).abs());
                if d > worst {
                    worst = d;
                    at = (m_int, m, n);
                }
            }
        }
    }
    assert!(line(
        worst <= ORACLE_TOL_ACC,
        "oracle equivalence (m,n ≤ 6, M ∈ {1,2})",
        format_args!("worst |closed form − quadrature| = {worst:.2e} at (M,m,n) = {at:?}, tol {ORACLE_TOL_ACC:e}"),
    ));
}

/// `∫₀^∞ q^{k−1/2} e^{−q} dq` as `∫₀^∞ 2u^{2k} e^{−u²} du` by composite Simpson.
fn moment(k: usize) -> f64 {
    let (hi, steps) = (16.0f64, 40_000usize);
    let h = hi / steps as f64;
    let f = |u: f64| 2.0 * u.powi(2 * k as i32) * (-u * u).exp();
    let mut s = f(0.0) + f(hi);
    for i in 1..steps {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn gram_checks() {
    let delta = Real::ratio(-1, 4);
    let g = gram_element(0, 1, &delta, GRAM_DIGITS).unwrap();
    let want = Float::with_val(400, 3).sqrt().recip();
    let err = Float::with_val(400, g.mid() - &want).abs();
    let ok = err < Float::with_val(64, 10f64.powi(-(GRAM_DIGITS as i32))) && g.contains_float(&want);
    let a = line(ok, "gram (0,1,−1/4) = 1/√3", format_args!("|error| = {:.2e}, ball contains 1/√3: {}", err.to_f64(), g.contains_float(&want)));

    let mut diag_ok = true;
    for n in 0..=40 {
        let d = gram_element(n, n, &delta, GRAM_DIGITS).unwrap();
        diag_ok &= *d.mid() == 1 && d.rad().is_zero();
    }
    let b = line(diag_ok, "gram diagonal", "P_nn = 1 with zero radius for n ≤ 40");

    // ⟨ψ_m|ψ_n⟩ with δ = −1/4 and 2a = 1: ∫q^{m+n−1/2}e^{−q} over the norms
    let mut worst: f64 = 0.0;
    for m in 0..=8 {
        for n in 0..=8 {
            let q = moment(m + n) / (moment(2 * m) * moment(2 * n)).sqrt();
            let v = gram_element(m, n, &delta, GRAM_DIGITS).unwrap().to_f64();
            worst = worst.max((q - v).abs());
        }
    }
    let c = line(worst <= GRAM_QUAD_TOL, "gram vs quadrature (m,n ≤ 8)", format_args!("worst {worst:.2e}, tol {GRAM_QUAD_TOL:e}"));
    assert!(a && b && c);
}

#[test]
fn desk_sweep_m1() {
    let setup = SweepSetup::default_for(1, 60).unwrap();
    let s = spectrum_sweep(&setup, &ElementCache::disabled(), |_| {}).unwrap();
    let v = s.monotonicity_violations();
    let a = line(v.is_empty(), "M=1 monotone within certificates (N ≤ 60)", format_args!("{} violations", v.len()));
    let l = s.last().lambda_back.to_f64();
    let b = line(
        l >= BACK60_BAND.0 && l <= BACK60_BAND.1,
        "M=1 λ_back(60) in band",
        format_args!("λ_back(60) = {l:.12}, band {BACK60_BAND:?}"),
    );
    // compared at full precision: −1 − 10⁻²⁰ is not representable in f64
    let floor = Float::with_val(PREC, -1) - Float::with_val(PREC, Float::parse(OVER_FLOOR_EXCESS).unwrap());
    let low = s
        .records
        .iter()
        .map(|r| Float::with_val(PREC, &r.lambda_over - r.cert_over))
        .min_by(|x, y| x.total_cmp(y))
        .unwrap();
    let margin = Float::with_val(PREC, &low + 1u32);
    let c = line(
        low >= floor,
        "M=1 λ_over ≥ −1 − 1e-20 (all N)",
        format_args!("min (λ_over − cert) + 1 = {:.3e}", margin.to_f64()),
    );
    assert!(a && b && c);
}

#[test]
fn desk_sweep_m2() {
    let setup = SweepSetup::default_for(2, 60).unwrap();
    let s = spectrum_sweep(&setup, &ElementCache::disabled(), |_| {}).unwrap();
    let r = s.last();
    let back = Float::with_val(PREC, &r.lambda_back - r.cert_back);
    let over = Float::with_val(PREC, &r.lambda_over + r.cert_over);
    let a = line(
        back > M2_BACK_MIN,
        "M=2 backflow exceeds single-interval constant",
        format_args!("λ_back(60) − cert = {:.12} > {M2_BACK_MIN}", back.to_f64()),
    );
    let b = line(
        over < M2_OVER_MAX,
        "M=2 overflow",
        format_args!("λ_over(60) + cert = {:.12} < {M2_OVER_MAX}", over.to_f64()),
    );
    let v = s.monotonicity_violations();
    let c = line(v.is_empty(), "M=2 monotone within certificates (N ≤ 60)", format_args!("{} violations", v.len()));
    assert!(a && b && c);
}

/// Hermitian `A` (off-diagonal entries of modulus ≤ √2) and `P = I + E` with
/// `|E_ij| ≤ 0.1`, as `f64` parts.
fn random_pencil(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut a_re, mut a_im, mut p) = (vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]);
    for i in 0..n {
        for j in i..n {
            let x = rng.random_range(-1.0..1.0);
            let y = if i == j { 0.0 } else { rng.random_range(-1.0..1.0) };
            let g = if i == j { 1.0 } else { rng.random_range(-0.1..0.1) };
            a_re[i * n + j] = x;
            a_re[j * n + i] = x;
            a_im[i * n + j] = y;
            a_im[j * n + i] = -y;
            p[i * n + j] = g;
            p[j * n + i] = g;
        }
    }
    (a_re, a_im, p)
}

fn pair_of(a_re: &[f64], a_im: &[f64], p: &[f64]) -> MatrixPair {
    let n = (p.len() as f64).sqrt() as usize;
    let f = |xs: &[f64]| xs.iter().map(|&x| Float::with_val(300, x)).collect::<Vec<_>>();
    MatrixPair::from_parts(
        f(a_re),
        f(a_im),
        f(p),
        Mag::zero(),
        equal_spacing_grid(1, &Real::int(1)).unwrap(),
        BasisSpec::default_for(1, n - 1),
        PrecisionPolicy::default(),
    )
    .unwrap()
}

#[test]
fn certificate_validity() {
    let n = 5;
    let pol = PrecisionPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut violations, mut certified, mut refused, mut misrefused) = (0, 0, 0, 0);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..CERT_CASES {
        let (a_re, a_im, p) = random_pencil(&mut rng, n);
        let r = 10f64.powf(rng.random_range(-6.0..-1.0));
        let mid = gevp_solve(&pair_of(&a_re, &a_im, &p), &pol, Mode::Full).unwrap();
        let lb = mid.eigenvalues.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max) * 1.25;
        // independent evaluation of the refusal threshold
        let delta_a = Mag::from_f64(r).mul_f64(std::f64::consts::SQRT_2);
        let should_refuse = c_max(n, lb, &delta_a, &Mag::from_f64(r), &mid.min_gram_eig) >= 0.5;
        let cert = match certify(&mid, &Mag::from_f64(r), n, lb) {
            Err(Error::Uncertifiable { .. }) => {
                refused += 1;
                misrefused += usize::from(!should_refuse);
                continue;
            }
            Err(e) => panic!("{e}"),
            Ok(c) => c,
        };
        misrefused += usize::from(should_refuse);
        certified += 1;
        // the exact pencil: every entry moved by ±r, staying Hermitian
        let (mut b_re, mut b_im, mut q) = (a_re.clone(), a_im.clone(), p.clone());
        for i in 0..n {
            for j in i..n {
                let s = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { r } else { -r };
                let (dx, dp) = (s(&mut rng), s(&mut rng));
                b_re[i * n + j] += dx;
                q[i * n + j] += dp;
                if i != j {
                    let dy = s(&mut rng);
                    b_re[j * n + i] += dx;
                    b_im[i * n + j] += dy;
                    b_im[j * n + i] -= dy;
                    q[j * n + i] += dp;
                }
            }
        }
        let pert = gevp_solve(&pair_of(&b_re, &b_im, &q), &pol, Mode::Full).unwrap();
        let pert_solver = pert.solver_radii();
        for i in 0..n {
            let d = Float::with_val(PREC, &pert.eigenvalues[i] - &mid.eigenvalues[i]).abs().to_f64();
            let allowed = cert.total_radius(i) + pert_solver[i].to_f64();
            worst_ratio = worst_ratio.max(d / allowed);
            if d > allowed {
                violations += 1;
            }
        }
    }
    let a = line(
        violations == 0,
        "certificate validity (100 random 5×5 pencils)",
        format_args!("{certified} certified, {violations} violations, max |Δλ|/radius = {worst_ratio:.3}"),
    );
    let b = line(
        misrefused == 0 && refused > 0,
        "certificate refusal at C_max ≥ 1/2",
        format_args!("{refused} refused, {misrefused} disagreements with C_max"),
    );
    assert!(a && b);
}

#[test]
fn acceleration_exactness() {
    let (a, b, c) = (fl(0.0384506), fl(-0.0329), fl(7.0));
    let x = seq(1, 64, |n| a.clone() + npow(n, "0.7") * &b);
    let d = max_dev(&richardson(&x, 0.7).unwrap(), |_| a.clone());
    let p1 = line(d < EXACT_TOL, "R_γ annihilates a + b n^−γ", format_args!("max deviation {d:.1e}"));

    let x = seq(1, 90, |n| a.clone() + npow(n, "0.5") * &b + npow(n, "1") * &c);
    let l = PowerLadder::new(vec![0.0, 0.5, 1.0]).unwrap();
    let d = max_dev(&generalized_richardson(&x, &l).unwrap(), |_| a.clone());
    let p2 = line(d < LADDER_TOL, "ladder (0,½,1) annihilates a + b n^−½ + c n^−1", format_args!("max deviation {d:.1e}"));

    let aff = |n: u64| fl(0.125) + Float::with_val(PREC, n) * fl(-0.75);
    let mut worst: f64 = 0.0;
    for (m, k) in [(3, 1), (7, 5), (5, 3)] {
        worst = worst.max(max_dev(&kz_filter(&seq(1, 80, aff), m, k).unwrap(), aff));
    }
    let p3 = line(worst < EXACT_TOL, "KZ preserves affine sequences", format_args!("max deviation {worst:.1e}"));

    // RD[x]_n = x_n − nΔx_n²/((n+1)Δx_{n+1} − nΔx_n) is exact on a + b/(n−1)
    let x = seq(2, 60, |n| a.clone() + Float::with_val(PREC, &b / (n - 1)));
    let d = max_dev(&raabe_duhamel(&x).unwrap().0, |_| a.clone());
    let p4 = line(d < EXACT_TOL, "RD maps a + b/(n−1) to a", format_args!("max deviation {d:.1e}"));
    assert!(p1 && p2 && p3 && p4);
}

/// Taken literally, "RD maps a + b/n to the constant a" does not hold for
/// the transform: its image is a − b/(n(n+1)). Kept as a red test.
#[test]
#[ignore = "the transform maps a + b/n to a − b/(n(n+1)), not to a"]
fn acceleration_rd_on_reciprocal() {
    let (a, b) = (fl(0.0384506), fl(-0.0329));
    let x = seq(1, 60, |n| a.clone() + Float::with_val(PREC, &b / n));
    let d = max_dev(&raabe_duhamel(&x).unwrap().0, |_| a.clone());
    assert!(line(d < EXACT_TOL, "RD maps a + b/n to a", format_args!("max deviation {d:.1e}")));
}

fn fixture_sequence() -> RealSequence {
    let text = include_str!("data/sweep_M1_N200.csv");
    let rows = read_sweep_csv(text).unwrap();
    let vals: Vec<Float> = rows.iter().map(|r| r.lambda_back(PREC).unwrap()).collect();
    assert_eq!(rows.first().unwrap().n, 1);
    RealSequence::new(1, vals).unwrap()
}

#[test]
fn acceleration_on_sweep_data() {
    let raw = fixture_sequence();
    assert_eq!(raw.end_index(), 200);
    let raw_last = raw.last().unwrap().to_f64();
    let acc = generalized_richardson(&raw, &PowerLadder::new(vec![0.0, 0.5]).unwrap()).unwrap();
    let est = acc.last().unwrap().to_f64();
    let (e_raw, e_acc) = ((raw_last - C_BM_REF).abs(), (est - C_BM_REF).abs());
    let a = line(
        e_acc < e_raw,
        "R(0,½) tail closer to 0.0384506 than λ_back(200)",
        format_args!("raw {raw_last:.10} (error {e_raw:.2e}), accelerated {est:.10} at N = {} (error {e_acc:.2e})", acc.end_index()),
    );
    // the raw differences oscillate; the fit uses the KZ(7,5)-smoothed tail
    let smooth = kz_filter(&raw, 7, 5).unwrap();
    let tail = smooth.slice(FIT_FROM.max(smooth.start_index()), smooth.end_index() as u64);
    let grid: Vec<f64> = (10..=100).map(|i| i as f64 / 100.0).collect();
    let fit = exponent_fit(&tail, &grid).unwrap();
    let b = line(
        (fit.gamma - 0.5).abs() <= GAMMA_TOL,
        "exponent fit γ ≈ ½",
        format_args!("γ = {:.4}, β = {:.5}, Pearson γ = {:?}", fit.gamma, fit.beta, fit.pearson_gamma),
    );
    assert!(a && b);
}

#[test]
fn analytic_side_results() {
    let c = s_and_k();
    let a = line(
        format!("{:.1e}", c.eta0) == "4.6e-3" && format!("{:.1e}", c.k) == "2.1e-4",
        "η₀ and k to two figures",
        format_args!("η₀ = {:.4e}, k = {:.4e}", c.eta0, c.k),
    );
    let mut ok = true;
    for (m, eps) in [(2, 0.05), (2, 0.1), (4, 0.05)] {
        let r = trial_state_expectation(m, eps).unwrap();
        ok &= line(
            r.holds(),
            &format!("trial-state inequality M={m} ε={eps}"),
            format_args!("value {:.6e} ± {:.1e} ≥ bound {:.6e}", r.value, r.error, r.bound),
        );
    }
    assert!(a && ok);
}

#[test]
fn classical_bound() {
    let ensembles = [
        PhaseSpaceEnsemble::GaussExp { x_mean: -0.5, x_sd: 1.0, p_mean: 1.0 },
        PhaseSpaceEnsemble::UniformBox { x_lo: -3.0, x_hi: 1.0, p_lo: 0.0, p_hi: 2.0 },
        PhaseSpaceEnsemble::GaussGamma { x_mean: -1.0, x_sd: 0.5, shape: 2.0, scale: 0.75 },
    ];
    let mut ok = true;
    for m in [1usize, 2, 4] {
        let grid = equal_spacing_grid(m, &Real::int(1)).unwrap();
        for (i, ens) in ensembles.iter().enumerate() {
            let e = classical_mc(ens, &grid, MC_SAMPLES, 17 + i as u64).unwrap();
            let slack = MC_SIGMAS * e.std_error;
            ok &= line(
                e.estimate >= -1.0 - slack && e.estimate <= slack,
                &format!("classical flux in [−1,0], M={m}, ensemble {i}"),
                format_args!("{:.5} ± {:.1e}", e.estimate, e.std_error),
            );
        }
    }
    assert!(ok);
}

#[test]
#[ignore = "extended tier: an N = 500 sweep takes hours"]
fn extended_tier_n500() {
    let setup = SweepSetup::default_for(1, 500).unwrap();
    let s = spectrum_sweep(&setup, &ElementCache::disabled(), |_| {}).unwrap();
    let r = s.last();
    let a = line(
        format!("{:.6}", r.lambda_back.to_f64()) == "0.036933",
        "λ_back(500)",
        format_args!("{:.10}", r.lambda_back.to_f64()),
    );
    let b = line(
        format!("{:.5}", r.lambda_over.to_f64()) == "-1.00000",
        "λ_over(500)",
        format_args!("{:.10}", r.lambda_over.to_f64()),
    );
    let raw = RealSequence::new(1, s.records.iter().map(|r| r.lambda_back.clone()).collect()).unwrap();
    let smooth = kz_filter(&raw, 7, 5).unwrap();
    let mut finals = Vec::new();
    for g in [vec![0.0, 0.5], vec![0.0, 0.5, 1.0]] {
        let acc = generalized_richardson(&smooth, &PowerLadder::new(g).unwrap()).unwrap();
        finals.push(acc.last().unwrap().to_f64());
    }
    let (lo, hi) = (finals.iter().cloned().fold(f64::INFINITY, f64::min), finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let c = line(
        lo >= 0.038450556 && hi <= 0.038450568,
        "accelerated bounds on the single-interval constant",
        format_args!("{lo:.12} ≤ c ≤ {hi:.12}"),
    );
    assert!(a && b && c);
}
