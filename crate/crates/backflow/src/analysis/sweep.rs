use std::fmt::Write as _;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{certify, sweep_extremes, EigVec, ErrorCertificate, SpectrumResult};
use crate::mpcore::{float_to_decimal, PrecisionPolicy, Real};
use crate::operators::{build_pair, equal_spacing_grid, BasisSpec, ElementCache, MatrixPair, TimeGrid};
use crate::Error;

/// Version tag written in the first CSV line.
pub const SWEEP_CSV_VERSION: &str = "backflow-sweep-v1";

/// Inputs of a sweep: grid, basis (with `n = N_max`) and precision policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSetup {
    pub grid: TimeGrid,
    pub spec: BasisSpec,
    pub policy: PrecisionPolicy,
    /// `λ_b` of the certificates; `‖C‖ ≤ M` makes `M` always valid.
    pub lambda_bound: f64,
}

impl SweepSetup {
    pub fn new(grid: TimeGrid, spec: BasisSpec, policy: PrecisionPolicy) -> Self {
        let lambda_bound = grid.m() as f64;
        SweepSetup { grid, spec, policy, lambda_bound }
    }

    /// Equal spacing with `T = 1`, `a = 2M/π`, `δ = −1/4`, default policy.
    pub fn default_for(m: usize, n_max: usize) -> Result<Self, Error> {
        Ok(SweepSetup::new(
            equal_spacing_grid(m, &Real::int(1))?,
            BasisSpec::default_for(m, n_max),
            PrecisionPolicy::for_n(n_max),
        ))
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn n_max(&self) -> usize {
        self.spec.n
    }
}

/// One truncation order `N` (basis `ψ_0..ψ_N`).
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub n: usize,
    pub lambda_back: Float,
    pub lambda_over: Float,
    /// Certified radius of `λ_back` (perturbation plus solver term).
    pub cert_back: f64,
    pub cert_over: f64,
    pub v_back: EigVec,
    pub v_over: EigVec,
    pub certificate: ErrorCertificate,
}

#[derive(Clone, Debug)]
pub struct SpectrumSweep {
    pub setup: SweepSetup,
    pub records: Vec<SweepRecord>,
    pub working_bits: u32,
}

/// A sweep monotonicity failure beyond the certified radii.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityViolation {
    pub n: usize,
    pub back: bool,
    pub excess: f64,
}

impl SpectrumSweep {
    pub fn m(&self) -> usize {
        self.setup.m()
    }

    pub fn record(&self, n: usize) -> Option<&SweepRecord> {
        self.records.iter().find(|r| r.n == n)
    }

    pub fn last(&self) -> &SweepRecord {
        self.records.last().expect("sweeps are nonempty")
    }

    /// Steps where `λ_back` decreases or `λ_over` increases by more than the
    /// sum of the two certificates.
    pub fn monotonicity_violations(&self) -> Vec<MonotonicityViolation> {
        let mut out = Vec::new();
        for w in self.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let drop = Float::with_val(64, &a.lambda_back - &b.lambda_back).to_f64() - (a.cert_back + b.cert_back);
            if drop > 0.0 {
                out.push(MonotonicityViolation { n: b.n, back: true, excess: drop });
            }
            let rise = Float::with_val(64, &b.lambda_over - &a.lambda_over).to_f64() - (a.cert_over + b.cert_over);
            if rise > 0.0 {
                out.push(MonotonicityViolation { n: b.n, back: false, excess: rise });
            }
        }
        out
    }

    /// Digits written per eigenvalue: the solver target.
    pub fn csv_digits(&self) -> usize {
        self.setup.policy.solver_digits as usize
    }

    /// `N,lambda_back,lambda_over,cert_back,cert_over` with decimal strings.
    pub fn to_csv(&self) -> String {
        let rows: Vec<SweepRow> = self.records.iter().map(|r| SweepRow::from_record(r, self.csv_digits())).collect();
        write_sweep_csv(&rows)
    }
}

/// A CSV row: every number is kept as its decimal string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub lambda_back: String,
    pub lambda_over: String,
    pub cert_back: String,
    pub cert_over: String,
}

impl SweepRow {
    fn from_record(r: &SweepRecord, digits: usize) -> Self {
        SweepRow {
            n: r.n,
            lambda_back: float_to_decimal(&r.lambda_back, digits),
            lambda_over: float_to_decimal(&r.lambda_over, digits),
            cert_back: format!("{:e}", r.cert_back),
            cert_over: format!("{:e}", r.cert_over),
        }
    }

    pub fn lambda_back(&self, prec: u32) -> Result<Float, Error> {
        parse_float(&self.lambda_back, prec)
    }

    pub fn lambda_over(&self, prec: u32) -> Result<Float, Error> {
        parse_float(&self.lambda_over, prec)
    }

    pub fn cert_back(&self) -> Result<f64, Error> {
        self.cert_back.parse().map_err(|_| Error::Parse(format!("bad radius {}", self.cert_back)))
    }

    pub fn cert_over(&self) -> Result<f64, Error> {
        self.cert_over.parse().map_err(|_| Error::Parse(format!("bad radius {}", self.cert_over)))
    }
}

fn parse_float(s: &str, prec: u32) -> Result<Float, Error> {
    Float::parse(s)
        .map(|p| Float::with_val(prec, p))
        .map_err(|e| Error::Parse(format!("bad decimal {s}: {e}")))
}

pub const SWEEP_CSV_HEADER: &str = "N,lambda_back,lambda_over,cert_back,cert_over";

pub fn write_sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("# {SWEEP_CSV_VERSION}\n{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.n, r.lambda_back, r.lambda_over, r.cert_back, r.cert_over);
    }
    s
}

/// Parse a sweep CSV written by [`write_sweep_csv`].
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>, Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(l) if l.trim() == format!("# {SWEEP_CSV_VERSION}") => {}
        other => return Err(Error::Parse(format!("missing sweep CSV version line, got {other:?}"))),
    }
    if lines.next().map(str::trim) != Some(SWEEP_CSV_HEADER) {
        return Err(Error::Parse(format!("sweep CSV header must be {SWEEP_CSV_HEADER}")));
    }
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("sweep CSV row {} has {} fields", i + 1, f.len())));
        }
        let row = SweepRow {
            n: f[0].parse().map_err(|_| Error::Parse(format!("bad N {}", f[0])))?,
            lambda_back: f[1].into(),
            lambda_over: f[2].into(),
            cert_back: f[3].into(),
            cert_over: f[4].into(),
        };
        row.lambda_back(64)?;
        row.lambda_over(64)?;
        row.cert_back()?;
        row.cert_over()?;
        rows.push(row);
    }
    Ok(rows)
}

/// `v†P w` restricted to the leading `len(v) × len(w)` block of `P`.
pub(crate) fn p_inner(pair: &MatrixPair, v: &EigVec, w: &EigVec, prec: u32) -> (Float, Float) {
    let mut re = Float::new(prec);
    let mut im = Float::new(prec);
    for i in 0..v.len() {
        // (Pw)_i
        let mut sr = Float::new(prec);
        let mut si = Float::new(prec);
        for j in 0..w.len() {
            let p = pair.p(i, j);
            sr += p * &w.re[j];
            si += p * &w.im[j];
        }
        // conj(v_i)(sr + i si)
        re += Float::with_val(prec, &v.re[i] * &sr) + Float::with_val(prec, &v.im[i] * &si);
        im += Float::with_val(prec, &v.re[i] * &si) - Float::with_val(prec, &v.im[i] * &sr);
    }
    (re, im)
}

fn rotate(v: &mut EigVec, c: &Float, s: &Float) {
    // v ← v·(c + i s)
    for k in 0..v.len() {
        let re = Float::with_val(v.re[k].prec(), &v.re[k] * c) - Float::with_val(v.re[k].prec(), &v.im[k] * s);
        let im = Float::with_val(v.re[k].prec(), &v.re[k] * s) + Float::with_val(v.re[k].prec(), &v.im[k] * c);
        v.re[k] = re;
        v.im[k] = im;
    }
}

/// Fix the phase of `v`: maximize overlap with `prev` in the `P` metric, or
/// (without a predecessor) make the largest coefficient real and positive.
pub(crate) fn fix_phase(pair: &MatrixPair, v: &mut EigVec, prev: Option<&EigVec>) {
    let prec = v.re.first().map_or(64, Float::prec);
    let (zr, zi) = match prev {
        Some(p) => p_inner(pair, p, v, prec),
        None => {
            let k = (0..v.len())
                .max_by(|&a, &b| modsq(v, a, prec).total_cmp(&modsq(v, b, prec)))
                .expect("nonempty");
            (v.re[k].clone(), v.im[k].clone())
        }
    };
    let mag = Float::with_val(prec, Float::with_val(prec, zr.square_ref()) + Float::with_val(prec, zi.square_ref())).sqrt();
    if mag.is_zero() {
        return;
    }
    // multiply by conj(z)/|z|
    let c = Float::with_val(prec, &zr / &mag);
    let s = -Float::with_val(prec, &zi / &mag);
    rotate(v, &c, &s);
    for x in &mut v.im {
        if x.is_zero() {
            *x = Float::new(prec);
        }
    }
}

fn modsq(v: &EigVec, k: usize, prec: u32) -> Float {
    Float::with_val(prec, v.re[k].square_ref()) + Float::with_val(prec, v.im[k].square_ref())
}

/// Build the pair once at `N_max`, solve every leading block `N = 1..=N_max`
/// (dimension `N + 1`) and certify both extremes with `λ_b = setup.lambda_bound`.
pub fn spectrum_sweep(
    setup: &SweepSetup,
    cache: &ElementCache,
    mut progress: impl FnMut(&SweepRecord),
) -> Result<SpectrumSweep, Error> {
    if setup.n_max() < 1 {
        return Err(Error::Domain("a sweep needs N_max ≥ 1".into()));
    }
    let pair = build_pair(&setup.grid, &setup.spec, &setup.policy, cache)?;
    sweep_pair(setup, &pair, &mut progress)
}

/// [`spectrum_sweep`] on an already assembled pair.
pub fn sweep_pair(
    setup: &SweepSetup,
    pair: &MatrixPair,
    mut progress: impl FnMut(&SweepRecord),
) -> Result<SpectrumSweep, Error> {
    let dims: Vec<usize> = (2..=setup.n_max() + 1).collect();
    let (ext, bits, dropped) = sweep_extremes(pair, &setup.policy, &dims, |_| {})?;
    let lambda_bound = setup.lambda_bound;
    let mut records: Vec<SweepRecord> = Vec::with_capacity(ext.len());
    for e in ext {
        let mut v_back = e.v_max;
        let mut v_over = e.v_min;
        fix_phase(pair, &mut v_back, records.last().map(|r| &r.v_back));
        fix_phase(pair, &mut v_over, records.last().map(|r| &r.v_over));
        let res = SpectrumResult {
            eigenvalues: vec![e.lambda_min.clone(), e.lambda_max.clone()],
            vectors: vec![],
            residual_norms: vec![e.residual_min, e.residual_max],
            min_gram_eig: e.min_gram_eig,
            working_bits: bits,
            dropped_imag: dropped.clone(),
            complex: !pair.is_real(),
        };
        let certificate = certify(&res, &pair.element_radius, e.dim, lambda_bound)?;
        let rec = SweepRecord {
            n: e.dim - 1,
            lambda_back: e.lambda_max,
            lambda_over: e.lambda_min,
            cert_back: certificate.total_radius(1),
            cert_over: certificate.total_radius(0),
            v_back,
            v_over,
            certificate,
        };
        progress(&rec);
        records.push(rec);
    }
    Ok(SpectrumSweep { setup: setup.clone(), records, working_bits: bits })
}
