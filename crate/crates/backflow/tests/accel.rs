use backflow::accel::*;
use backflow::Error;
use proptest::prelude::*;
use rug::ops::Pow;
use rug::Float;

const PREC: u32 = 256;

fn seq(start: u64, len: usize, f: impl Fn(u64) -> Float) -> RealSequence {
    RealSequence::new(start, (start..start + len as u64).map(f).collect()).unwrap()
}

fn fl(x: f64) -> Float {
    Float::with_val(PREC, x)
}

/// `n^{−γ}` at full precision, with γ read as a decimal.
fn npow(n: u64, gamma: &str) -> Float {
    let g = Float::with_val(PREC, Float::parse(gamma).unwrap());
    Float::with_val(PREC, n).pow(-g)
}

fn max_dev(x: &RealSequence, want: impl Fn(u64) -> Float) -> f64 {
    x.iter()
        .map(|(n, v)| Float::with_val(PREC, v - want(n)).abs().to_f64())
        .fold(0.0, f64::max)
}

#[test]
fn richardson_examples() {
    let c = seq(1, 40, |_| fl(0.375));
    let r = richardson(&c, 0.5).unwrap();
    assert_eq!(r.len(), 20);
    assert_eq!(r.start_index(), 1);
    assert!(max_dev(&r, |_| fl(0.375)) < 1e-70);

    // a + b n^{−γ} is annihilated exactly
    let x = seq(1, 64, |n| fl(0.25) + npow(n, "0.7") * 3u32);
    let r = richardson(&x, 0.7).unwrap();
    assert!(max_dev(&r, |_| fl(0.25)) < 1e-70);

    // n^{−α} is an eigen-sequence with factor (2^{γ−α} − 1)/(2^γ − 1)
    let (alpha, gamma) = (1.5f64, 0.5f64);
    let x = seq(3, 50, |n| npow(n, "1.5"));
    let r = richardson(&x, gamma).unwrap();
    let factor = (2f64.powf(gamma - alpha) - 1.0) / (2f64.powf(gamma) - 1.0);
    for (n, v) in r.iter() {
        let want = factor * (n as f64).powf(-alpha);
        assert!((v.to_f64() - want).abs() < 1e-15 * want.abs());
    }

    for g in [0.0, -1.0, f64::NAN] {
        assert!(matches!(richardson(&c, g), Err(Error::Domain(_))));
    }
    assert!(richardson(&seq(1, 1, |_| fl(1.0)), 1.0).is_err());
}

#[test]
fn generalized_richardson_examples() {
    let x = seq(1, 80, |n| fl(0.5) - npow(n, "0.5") * fl(0.0329) + npow(n, "1") * 7u32);
    // two-term ladder equals the plain accelerator
    let l = PowerLadder::new(vec![0.0, 0.5]).unwrap();
    let g = generalized_richardson(&x, &l).unwrap();
    let r = richardson(&x, 0.5).unwrap();
    assert_eq!(g.len(), r.len());
    for ((_, a), (_, b)) in g.iter().zip(r.iter()) {
        assert!(Float::with_val(PREC, a - b).abs().to_f64() < 1e-70);
    }
    // (0, 1/2, 1) removes both power terms
    let l = PowerLadder::new(vec![0.0, 0.5, 1.0]).unwrap();
    let g = generalized_richardson(&x, &l).unwrap();
    assert_eq!(g.len(), 80 / 3);
    assert!(max_dev(&g, |_| fl(0.5)) < 1e-65);

    assert!(PowerLadder::new(vec![0.0, 0.5, 0.5]).is_err());
    assert!(PowerLadder::new(vec![0.1, 0.5]).is_err());
    assert!(PowerLadder::with_factors(vec![0.0, 0.5], vec![2, 3]).is_err());
    assert_eq!(PowerLadder::parse("0.5,1").unwrap().gammas(), &[0.0, 0.5, 1.0]);
    assert!(generalized_richardson(&seq(1, 2, |_| fl(1.0)), &l).is_err());
}

#[test]
fn kz_examples() {
    let x = RealSequence::from_f64(0, &[0.0, 3.0, 0.0, 3.0, 0.0], PREC).unwrap();
    let k = kz_filter(&x, 3, 1).unwrap();
    assert_eq!(k.to_f64(), vec![1.0, 2.0, 1.0]);
    assert_eq!(k.start_index(), 1);

    let c = seq(5, 30, |_| fl(-2.5));
    let k = kz_filter(&c, 7, 2).unwrap();
    assert_eq!(k.len(), 30 - 12);
    assert_eq!(k.start_index(), 11);
    assert!(max_dev(&k, |_| fl(-2.5)) == 0.0);

    let aff = |n: u64| fl(0.125) + Float::with_val(PREC, n) / 3u32;
    let k = kz_filter(&seq(1, 60, aff), 7, 5).unwrap();
    assert_eq!(k.start_index(), 16);
    assert!(max_dev(&k, aff) < 1e-70);

    assert!(kz_filter(&c, 4, 1).is_err());
    assert!(kz_filter(&c, 7, 5).is_err()); // 30 ≤ 5·6
    assert!(kz_filter(&c, 7, 0).is_err());
}

#[test]
fn kz_then_richardson_keeps_raw_labels() {
    // after KZ_{3,1} the value labelled n is the average of x_{n−1}, x_n, x_{n+1}
    let x = seq(1, 41, |n| fl(1.0) + Float::with_val(PREC, n));
    let k = kz_filter(&x, 3, 1).unwrap();
    assert_eq!(k.start_index(), 2);
    assert_eq!(k.get(10).unwrap().to_f64(), 11.0);
    let r = richardson(&k, 1.0).unwrap();
    // (2 x_{2n} − x_n) on the raw labels
    assert_eq!(r.start_index(), 2);
    assert_eq!(r.get(5).unwrap().to_f64(), 2.0 * 11.0 - 6.0);
    assert_eq!(r.end_index(), 20);
}

#[test]
fn raabe_duhamel_examples() {
    let (a, b) = (0.0384506, -0.75);
    // a + b/(n−1) is mapped to a exactly
    let x = seq(2, 40, |n| fl(a) + fl(b) / (n - 1));
    let (r, rep) = raabe_duhamel(&x).unwrap();
    assert!(max_dev(&r, |_| fl(a)) < 1e-70);
    assert!(rep.flagged.is_empty());
    assert!(rep.condition_holds());
    // a + b/n is mapped to a − b/(n(n+1))
    let x = seq(1, 40, |n| fl(a) + fl(b) / n);
    let (r, rep) = raabe_duhamel(&x).unwrap();
    assert_eq!(r.len(), 38);
    assert!(max_dev(&r, |n| fl(a) - fl(b) / (n * (n + 1))) < 1e-70);
    assert!(rep.condition_holds());
    // the accelerated error is smaller everywhere
    for (n, v) in r.iter() {
        let raw = Float::with_val(PREC, x.get(n).unwrap() - fl(a)).abs();
        assert!(Float::with_val(PREC, v - fl(a)).abs() < raw);
    }
    // constant sequences: every denominator degenerates, values are kept
    let c = seq(1, 10, |_| fl(4.0));
    let (r, rep) = raabe_duhamel(&c).unwrap();
    assert_eq!(r.len(), 8);
    assert!(max_dev(&r, |_| fl(4.0)) == 0.0);
    assert_eq!(rep.flagged.len(), 8);
    assert!(raabe_duhamel(&seq(1, 2, |_| fl(1.0))).is_err());
}

#[test]
fn raabe_duhamel_drops_isolated_singularities() {
    // at n = 1: 2·(3−2) − 1·(2−0) = 0 with a nonzero numerator, so the
    // output restarts after it
    let x = RealSequence::from_f64(1, &[0.0, 2.0, 3.0, 5.0, 8.0], PREC).unwrap();
    let (r, rep) = raabe_duhamel(&x).unwrap();
    assert_eq!(rep.flagged, vec![1]);
    assert_eq!(r.start_index(), 2);
    // x_n − n d₀²/((n+1)d₁ − n d₀) at n = 2, 3
    assert_eq!(r.to_f64(), vec![2.0 - 2.0 * 1.0 / (3.0 * 2.0 - 2.0 * 1.0), 3.0 - 3.0 * 4.0 / (4.0 * 3.0 - 3.0 * 2.0)]);
}

#[test]
fn exponent_fit_on_synthetic_tail() {
    let x = seq(20, 300, |n| fl(0.0384506) - npow(n, "0.5") * fl(0.0329));
    let grid: Vec<f64> = (0..=20).map(|k| 0.3 + 0.02 * k as f64).collect();
    let fit = exponent_fit(&x, &grid).unwrap();
    assert!((fit.gamma - 0.5).abs() <= 0.02, "γ = {}", fit.gamma);
    assert!((fit.beta - 0.0329).abs() <= 0.002, "β = {}", fit.beta);
    assert!((fit.pearson_gamma.unwrap() - 0.5).abs() <= 0.05);
    // decreasing sequences give β < 0
    let y = seq(20, 300, |n| fl(-1.06) + npow(n, "0.5") * fl(0.05));
    let fit = exponent_fit(&y, &grid).unwrap();
    assert!(fit.beta < 0.0 && (fit.gamma - 0.5).abs() <= 0.02);
    assert!((fit.pearson_gamma.unwrap() - 0.5).abs() <= 0.05);

    let wobble = RealSequence::from_f64(1, &[1.0, 2.0, 1.5, 3.0], PREC).unwrap();
    assert!(matches!(exponent_fit(&wobble, &grid), Err(Error::FitRejected(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ladder_weights_solve_their_system(mut gs in proptest::collection::vec(0.05f64..4.0, 1..6)) {
        gs.sort_by(f64::total_cmp);
        gs.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        let mut gammas = vec![0.0];
        gammas.extend(gs);
        let ladder = PowerLadder::new(gammas.clone()).unwrap();
        let prec = 200;
        let v = ladder_weights(&ladder, prec).unwrap();
        for (i, g) in gammas.iter().enumerate() {
            let ge = Float::with_val(prec, Float::parse(format!("{g:e}")).unwrap());
            let mut s = Float::with_val(prec, 0);
            for (j, vj) in v.iter().enumerate() {
                s += Float::with_val(prec, vj * Float::with_val(prec, (j + 1) as u32).pow(Float::with_val(prec, -&ge)));
            }
            let want = if i == 0 { 1 } else { 0 };
            let err = Float::with_val(prec, s - want).abs().to_f64();
            prop_assert!(err <= 10f64.powi(-(backflow::mpcore::bits_to_digits(prec) as i32) + 5));
        }
    }

    #[test]
    fn accelerators_preserve_limits(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let x = seq(1, 400, |n| fl(a) + fl(b) * npow(n, "0.5") + fl(c) * npow(n, "1.5"));
        let r = richardson(&x, 0.5).unwrap();
        let g = generalized_richardson(&x, &PowerLadder::new(vec![0.0, 0.5, 1.0]).unwrap()).unwrap();
        let k = kz_filter(&x, 7, 5).unwrap();
        let (d, _) = raabe_duhamel(&x).unwrap();
        let raw = Float::with_val(PREC, x.last().unwrap() - fl(a)).abs().to_f64();
        for s in [&r, &g, &k, &d] {
            let e = Float::with_val(PREC, s.last().unwrap() - fl(a)).abs().to_f64();
            prop_assert!(e <= raw * 1.5 + 1e-60, "{e} vs {raw}");
        }
        // Richardson leaves only the n^{-3/2} term
        prop_assert!(max_dev(&r, |n| fl(a) + fl(c) * npow(n, "1.5") * ((2f64.powf(-1.0) - 1.0) / (2f64.sqrt() - 1.0))) < 1e-14);
    }
}
