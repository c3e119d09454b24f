use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use backflow::accel::{
    exponent_fit, generalized_richardson, kz_filter, raabe_duhamel, PowerLadder, RealSequence,
};
use backflow::analysis::{
    bounds_report, classical_mc, eigvec_distance, eigvec_profile, read_sweep_csv, s_and_k, sweep_pair,
    trial_state_expectation, PhaseSpaceEnsemble, ProfileScale, SweepRow, SweepSetup, C_BM_UPPER, SWEEP_CSV_VERSION,
};
use backflow::mpcore::{digits_to_bits, float_to_decimal, PrecisionPolicy, Real};
use backflow::operators::{
    build_pair, cache, equal_spacing_grid, gram_element, mfold_element, BasisSpec, ElementCache, TimeGrid,
};
use backflow::Error;
use serde_json::{json, Map, Value};

use crate::config::{resolve_dir, ConfigFile, ENV_CACHE_DIR, ENV_OUT_DIR};
use crate::manifest::{
    exit_code, file_digest, partial_path, sha256_hex, write_atomic, CacheDigest, ErrorRecord, Manifest, OutputFile,
    Status,
};
use crate::{CacheAction, Cli, Command, Format, SetupArgs, Spacing, Which, EXIT_CHECK_FAILED};

/// Per-run state: resolved configuration, output location and the manifest
/// under construction.
pub struct Ctx<'a> {
    pub cfg: ConfigFile,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub format: Format,
    pub manifest: Manifest,
    /// File stem of the artifacts, manifest and error record.
    pub stem: String,
    pub out: &'a mut dyn Write,
    cache: Option<ElementCache>,
}

/// Result of a command that ran to completion.
pub struct Outcome {
    pub results: Value,
    /// A checked property that failed: (kind, message, exit status).
    pub failed_check: Option<(String, String, i32)>,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Outcome { results, failed_check: None }
    }
}

impl Ctx<'_> {
    fn cache(&mut self) -> Result<&ElementCache, Error> {
        if self.cache.is_none() {
            self.cache = Some(match &self.cache_dir {
                Some(d) => ElementCache::open(d)?,
                None => ElementCache::disabled(),
            });
        }
        Ok(self.cache.as_ref().expect("just set"))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write an artifact atomically and record its digest.
    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Error> {
        let p = self.path(name);
        write_atomic(&p, bytes)?;
        self.manifest.outputs.push(OutputFile { path: name.into(), sha256: sha256_hex(bytes) });
        Ok(p)
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn emit_table(&mut self, stem: &str, table: &Table) -> Result<String, Error> {
        let name = format!("{stem}.{}", self.ext());
        let bytes = match self.format {
            Format::Csv => table.to_csv(),
            Format::Json => table.to_json(),
        };
        self.emit(&name, bytes.as_bytes())?;
        Ok(name)
    }

    fn record_store(&mut self, grid: &TimeGrid, spec: &BasisSpec) -> Result<(), Error> {
        let store = self.cache()?.store(grid, spec)?;
        if let Some(s) = store {
            let p = s.data_path().to_path_buf();
            if p.exists() {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                self.manifest.cache.push(CacheDigest { store: name, sha256: file_digest(&p)? });
            }
        }
        Ok(())
    }

    fn say(&mut self, line: &str) {
        let _ = writeln!(self.out, "{line}");
    }
}

/// Rows of decimal strings with a fixed column order.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// An array of objects whose values are the same strings as in the CSV.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> =
                    self.columns.iter().zip(r).map(|(c, v)| ((*c).to_string(), Value::String(v.clone()))).collect();
                Value::Object(m)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("strings serialize");
        s.push('\n');
        s
    }
}

fn parse_real(s: &str, what: &str) -> Result<Real, Error> {
    s.parse::<Real>().map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn radius_str(x: f64) -> String {
    format!("{x:e}")
}

/// Grid, basis and precision policy for a basis of highest index `n`.
struct Setup {
    grid: TimeGrid,
    spec: BasisSpec,
    policy: PrecisionPolicy,
}

fn resolve_setup(ctx: &mut Ctx, a: &SetupArgs, n: usize) -> Result<Setup, Error> {
    let cfg = &ctx.cfg;
    let grid = match cfg.pick_opt(a.grid.clone(), "grid")? {
        Some(g) => TimeGrid::new(
            g.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_real(t.trim(), "grid")).collect::<Result<_, _>>()?,
        )?,
        None => {
            let m: usize = cfg.pick(a.m, "M", 1)?;
            if m == 0 {
                return Err(Error::Domain("M must be at least 1".into()));
            }
            let t = parse_real(&cfg.pick(a.t.clone(), "T", "1".to_string())?, "T")?;
            equal_spacing_grid(m, &t)?
        }
    };
    let m = grid.m();
    let default = BasisSpec::default_for(m, n);
    let aa = match cfg.pick_opt(a.a.clone(), "a")? {
        Some(s) => parse_real(&s, "a")?,
        None => default.a.clone(),
    };
    let delta = match cfg.pick_opt(a.delta.clone(), "delta")? {
        Some(s) => parse_real(&s, "delta")?,
        None => default.delta.clone(),
    };
    let spec = BasisSpec::new(aa, delta, n)?;
    let base = PrecisionPolicy::for_n(n);
    let solver = cfg.pick(a.solver_digits, "solver_digits", base.solver_digits)?;
    let element = cfg.pick(a.element_digits, "element_digits", base.element_digits.max(solver))?;
    let policy = PrecisionPolicy::new(element, solver)?;
    ctx.manifest.input("grid", grid.canonical());
    ctx.manifest.input("M", m);
    ctx.manifest.input("a", spec.a.to_string());
    ctx.manifest.input("delta", spec.delta.to_string());
    ctx.manifest.input("element_digits", policy.element_digits);
    ctx.manifest.input("solver_digits", policy.solver_digits);
    Ok(Setup { grid, spec, policy })
}

pub(crate) fn execute(cli: Cli, out: &mut dyn Write) -> i32 {
    let started = Instant::now();
    let g = cli.global;
    let command = cli.command;
    let name = command.name();
    let cfg_res = match &g.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    };
    let (cfg, cfg_err) = match cfg_res {
        Ok(c) => (c, None),
        Err(e) => (ConfigFile::default(), Some(e)),
    };
    let out_dir = resolve_dir(g.out_dir.clone(), ENV_OUT_DIR, &cfg, "out_dir", "backflow-out");
    let cache_dir = if g.no_cache || cfg.raw("no_cache").is_some_and(|v| v == "true") {
        None
    } else {
        Some(resolve_dir(g.cache_dir.clone(), ENV_CACHE_DIR, &cfg, "cache_dir", ".backflow-cache"))
    };
    let mut ctx = Ctx {
        format: Format::Csv,
        cfg,
        out_dir,
        cache_dir,
        manifest: Manifest::new(name),
        stem: name.to_string(),
        out,
        cache: None,
    };
    let res = cfg_err.map_or(Ok(()), Err).and_then(|_| {
        ctx.format = ctx.cfg.pick(g.format, "format", Format::Csv)?;
        let threads: Option<usize> = ctx.cfg.pick_opt(g.threads, "threads")?;
        if let Some(t) = threads {
            if t == 0 {
                return Err(Error::Domain("--threads must be positive".into()));
            }
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        ctx.manifest.input("format", ctx.format);
        ctx.manifest.input("cache_dir", ctx.cache_dir.as_ref().map(|p| p.display().to_string()));
        ctx.manifest.input("out_dir", ctx.out_dir.display().to_string());
        if let Some(p) = &g.config {
            ctx.manifest.input("config", p.display().to_string());
        }
        Ok(())
    });
    let res = res.and_then(|_| dispatch(&mut ctx, command));
    ctx.manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    let code = match res {
        Ok(o) => {
            ctx.manifest.results = o.results;
            match o.failed_check {
                None => {
                    ctx.manifest.status = Status::Complete;
                    0
                }
                Some((kind, message, code)) => {
                    ctx.manifest.status = Status::Complete;
                    let rec = ErrorRecord {
                        schema: crate::manifest::ERROR_SCHEMA.into(),
                        command: name.into(),
                        kind,
                        message,
                        exit_code: code,
                        details: ctx.manifest.results.clone(),
                    };
                    report_error(&mut ctx, rec);
                    code
                }
            }
        }
        Err(e) => {
            if ctx.manifest.status != Status::Partial {
                ctx.manifest.status = Status::Failed;
            }
            let rec = ErrorRecord::from_error(name, &e);
            report_error(&mut ctx, rec);
            exit_code(&e)
        }
    };
    let mpath = ctx.path(&format!("{}.manifest.json", ctx.stem));
    if let Err(e) = ctx.manifest.write(&mpath) {
        eprintln!("cannot write manifest {}: {e}", mpath.display());
        return if code == 0 { exit_code(&e) } else { code };
    }
    code
}

fn report_error(ctx: &mut Ctx, rec: ErrorRecord) {
    let text = serde_json::to_string_pretty(&rec).expect("error records serialize");
    eprintln!("{text}");
    let p = ctx.path(&format!("{}.error.json", ctx.stem));
    if let Err(e) = write_atomic(&p, format!("{text}\n").as_bytes()) {
        eprintln!("cannot write {}: {e}", p.display());
    }
    ctx.manifest.error = Some(rec);
}

fn dispatch(ctx: &mut Ctx, command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Gram { row, col, block, delta, digits } => gram(ctx, row, col, block, delta, digits),
        Command::Matrix { setup, row, col, block } => matrix(ctx, &setup, row, col, block),
        Command::Sweep { setup, n_max } => sweep(ctx, &setup, n_max),
        Command::Accelerate { input, which, ladder, kz, rd, fit, fit_from, target } => {
            accelerate(ctx, input, which, ladder, kz, rd, (fit, fit_from), target)
        }
        Command::Eigvec { setup, n, which, pmin, pmax, points, spacing, p34, distance_to } => {
            eigvec(ctx, &setup, n, which, (pmin, pmax, points, spacing), p34, distance_to)
        }
        Command::Trial { m, epsilon } => trial(ctx, m, epsilon),
        Command::Classical { setup, ensemble, samples, seed } => classical(ctx, &setup, ensemble, samples, seed),
        Command::Certify { setup, n_max, lambda_bound } => certify(ctx, &setup, n_max, lambda_bound),
        Command::Report => report(ctx),
        Command::Cache { action } => cache_admin(ctx, action),
    }
}

/// `(m, n)` pairs of a single element or of the upper triangle of a block.
fn index_pairs(row: Option<usize>, col: Option<usize>, block: Option<usize>) -> Result<(Vec<(usize, usize)>, String), Error> {
    match (block, row, col) {
        (Some(k), None, None) => {
            if k == 0 {
                return Err(Error::Domain("--block must be positive".into()));
            }
            Ok(((0..k).flat_map(|m| (m..k).map(move |n| (m, n))).collect(), format!("block{k}")))
        }
        (None, Some(m), Some(n)) => Ok((vec![(m, n)], format!("m{m}_n{n}"))),
        _ => Err(Error::Parse("give either --m and --n, or --block".into())),
    }
}

fn gram(
    ctx: &mut Ctx,
    row: Option<usize>,
    col: Option<usize>,
    block: Option<usize>,
    delta: Option<String>,
    digits: Option<u32>,
) -> Result<Outcome, Error> {
    let cfg = &ctx.cfg;
    let row = cfg.pick_opt(row, "row")?;
    let col = cfg.pick_opt(col, "col")?;
    let block = cfg.pick_opt(block, "block")?;
    let delta = parse_real(&cfg.pick(delta, "delta", "-1/4".to_string())?, "delta")?;
    let digits: u32 = cfg.pick(digits, "digits", 30)?;
    let (pairs, tag) = index_pairs(row, col, block)?;
    ctx.stem = format!("gram_{tag}");
    ctx.manifest.input("delta", delta.to_string());
    ctx.manifest.input("digits", digits);
    ctx.manifest.input("pairs", &tag);
    let mut t = Table::new(&["m", "n", "value", "radius"]);
    for &(m, n) in &pairs {
        let b = gram_element(m, n, &delta, digits)?;
        t.push(vec![m.to_string(), n.to_string(), b.mid_decimal(digits as usize), radius_str(b.rad().to_f64())]);
    }
    if pairs.len() == 1 {
        let line = format!("G[{},{}] = {} +/- {}", pairs[0].0, pairs[0].1, t.rows[0][2], t.rows[0][3]);
        ctx.say(&line);
    }
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    ctx.say(&format!("wrote {file}"));
    Ok(Outcome::ok(json!({ "elements": pairs.len(), "first": t.rows[0][2] })))
}

fn matrix(
    ctx: &mut Ctx,
    setup: &SetupArgs,
    row: Option<usize>,
    col: Option<usize>,
    block: Option<usize>,
) -> Result<Outcome, Error> {
    let row = ctx.cfg.pick_opt(row, "row")?;
    let col = ctx.cfg.pick_opt(col, "col")?;
    let block = ctx.cfg.pick_opt(block, "block")?;
    let (pairs, tag) = index_pairs(row, col, block)?;
    let n_hi = pairs.iter().map(|&(m, n)| m.max(n)).max().unwrap_or(0);
    let s = resolve_setup(ctx, setup, n_hi)?;
    ctx.stem = format!("matrix_M{}_{tag}", s.grid.m());
    let digits = s.policy.element_digits as usize;
    let mut t = Table::new(&["m", "n", "re", "im", "radius"]);
    if block.is_some() {
        let pair = build_pair(&s.grid, &s.spec, &s.policy, ctx.cache()?)?;
        for &(m, n) in &pairs {
            t.push(vec![
                m.to_string(),
                n.to_string(),
                float_to_decimal(pair.a_re(m, n), digits),
                float_to_decimal(pair.a_im(m, n), digits),
                radius_str(pair.element_radius.to_f64()),
            ]);
        }
        ctx.record_store(&s.grid, &s.spec)?;
    } else {
        let (m, n) = pairs[0];
        let e = mfold_element(m, n, &s.grid, &s.spec, &s.policy)?;
        t.push(vec![
            m.to_string(),
            n.to_string(),
            e.re.mid_decimal(digits),
            e.im.mid_decimal(digits),
            radius_str(e.rad().to_f64()),
        ]);
        let line = format!("C[{m},{n}] = {} + i {} +/- {}", t.rows[0][2], t.rows[0][3], t.rows[0][4]);
        ctx.say(&line);
    }
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    ctx.say(&format!("wrote {file}"));
    Ok(Outcome::ok(json!({ "elements": pairs.len(), "first_re": t.rows[0][2], "first_im": t.rows[0][3] })))
}

fn sweep_setup(ctx: &mut Ctx, setup: &SetupArgs, n_max: Option<usize>) -> Result<SweepSetup, Error> {
    let n_max: usize = ctx
        .cfg
        .pick_opt(n_max, "Nmax")?
        .ok_or_else(|| Error::Parse("--Nmax is required".into()))?;
    if n_max < 1 {
        return Err(Error::Domain("--Nmax must be at least 1".into()));
    }
    ctx.manifest.input("Nmax", n_max);
    let s = resolve_setup(ctx, setup, n_max)?;
    Ok(SweepSetup::new(s.grid, s.spec, s.policy))
}

fn sweep(ctx: &mut Ctx, setup: &SetupArgs, n_max: Option<usize>) -> Result<Outcome, Error> {
    let setup = sweep_setup(ctx, setup, n_max)?;
    let (m, n_max) = (setup.m(), setup.n_max());
    ctx.stem = format!("sweep_M{m}_N{n_max}");
    let name = format!("{}.{}", ctx.stem, ctx.ext());
    let final_path = ctx.path(&name);
    let partial = partial_path(&final_path);
    std::fs::create_dir_all(&ctx.out_dir)?;
    let _ = std::fs::remove_file(&final_path);
    let pair = build_pair(&setup.grid, &setup.spec, &setup.policy, ctx.cache()?)?;
    ctx.record_store(&setup.grid, &setup.spec)?;
    // rows stream into `<name>.partial`; it is renamed only after the last one
    let digits = setup.policy.solver_digits as usize;
    let mut pf = std::fs::File::create(&partial)?;
    writeln!(pf, "# {SWEEP_CSV_VERSION} (partial)")?;
    let mut wrote = 0usize;
    let res = sweep_pair(&setup, &pair, |r| {
        let _ = writeln!(
            pf,
            "{},{},{},{:e},{:e}",
            r.n,
            float_to_decimal(&r.lambda_back, digits),
            float_to_decimal(&r.lambda_over, digits),
            r.cert_back,
            r.cert_over
        );
        wrote += 1;
    });
    drop(pf);
    let sw = match res {
        Ok(s) => s,
        Err(e) => {
            if wrote > 0 {
                ctx.manifest.status = Status::Partial;
                let pname = partial.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                ctx.manifest.outputs.push(OutputFile { path: pname, sha256: file_digest(&partial)? });
            } else {
                let _ = std::fs::remove_file(&partial);
            }
            return Err(e);
        }
    };
    let bytes = match ctx.format {
        Format::Csv => sw.to_csv(),
        Format::Json => {
            let rows = read_sweep_csv(&sw.to_csv())?;
            let mut s = serde_json::to_string_pretty(&json!({ "schema": SWEEP_CSV_VERSION, "rows": rows }))
                .map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    ctx.emit(&name, bytes.as_bytes())?;
    std::fs::remove_file(&partial)?;
    let last = sw.last();
    let violations = sw.monotonicity_violations();
    let window = bounds_report(m, C_BM_UPPER);
    let lb = last.lambda_back.to_f64();
    let lo = last.lambda_over.to_f64();
    let min_over = sw.records.iter().map(|r| r.lambda_over.to_f64()).fold(f64::INFINITY, f64::min);
    ctx.say(&format!("M = {m}, N = {n_max}, working precision {} bits", sw.working_bits));
    ctx.say(&format!("lambda_back({n_max}) = {} +/- {:e}", float_to_decimal(&last.lambda_back, 20), last.cert_back));
    ctx.say(&format!("lambda_over({n_max}) = {} +/- {:e}", float_to_decimal(&last.lambda_over, 20), last.cert_over));
    ctx.say(&format!("monotonicity violations: {}", violations.len()));
    ctx.say(&format!("wrote {name}"));
    Ok(Outcome::ok(json!({
        "M": m,
        "Nmax": n_max,
        "lambda_back": float_to_decimal(&last.lambda_back, digits),
        "lambda_over": float_to_decimal(&last.lambda_over, digits),
        "cert_back": last.cert_back,
        "cert_over": last.cert_over,
        "min_lambda_over": min_over,
        "working_bits": sw.working_bits,
        "monotonicity_violations": violations.len(),
        "in_window": window.contains(lb) && window.contains(lo),
        "window": [window.lower, window.upper],
    })))
}

fn parse_kz(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Parse(format!("--kz expects m,k, got {s}"));
    let (m, k) = s.split_once(',').ok_or_else(bad)?;
    Ok((m.trim().parse().map_err(|_| bad())?, k.trim().parse().map_err(|_| bad())?))
}

fn ladder_label(l: &PowerLadder) -> String {
    let g: Vec<String> = l.gammas().iter().map(|g| g.to_string()).collect();
    format!("R({})", g.join(";"))
}

#[allow(clippy::too_many_arguments)]
fn accelerate(
    ctx: &mut Ctx,
    input: Option<PathBuf>,
    which: Option<Which>,
    ladders: Vec<String>,
    kz: Vec<String>,
    rd: bool,
    (fit, fit_from): (bool, Option<u64>),
    target: Option<f64>,
) -> Result<Outcome, Error> {
    let cfg = &ctx.cfg;
    let input: PathBuf = cfg.pick_opt(input, "input")?.ok_or_else(|| Error::Parse("--input is required".into()))?;
    let which = cfg.pick(which, "which", Which::Back)?;
    let ladders = if !ladders.is_empty() {
        ladders
    } else {
        cfg.raw("ladder").map(|s| s.split(';').map(String::from).collect()).unwrap_or_else(|| vec!["0,0.5".into()])
    };
    let kz = if !kz.is_empty() { kz } else { cfg.raw("kz").map(|s| s.split(';').map(String::from).collect()).unwrap_or_default() };
    let rd = rd || cfg.get::<bool>("rd")?.unwrap_or(false);
    let fit = fit || cfg.get::<bool>("fit")?.unwrap_or(false);
    let fit_from: Option<u64> = cfg.pick_opt(fit_from, "fit_from")?;
    let target = cfg.pick_opt(target, "target")?;
    let kz: Vec<(usize, usize)> = kz.iter().map(|s| parse_kz(s)).collect::<Result<_, _>>()?;
    let ladders: Vec<PowerLadder> = ladders.iter().map(|s| PowerLadder::parse(s)).collect::<Result<_, _>>()?;
    let src_stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    ctx.stem = format!("accelerate_{src_stem}_{}", which.name());
    let text = std::fs::read_to_string(&input)?;
    ctx.manifest.input("input", input.display().to_string());
    ctx.manifest.input("input_sha256", sha256_hex(text.as_bytes()));
    ctx.manifest.input("which", which.name());
    ctx.manifest.input("ladder", ladders.iter().map(|l| l.gammas().to_vec()).collect::<Vec<_>>());
    ctx.manifest.input("kz", &kz);
    ctx.manifest.input("rd", rd);
    ctx.manifest.input("fit", fit);
    ctx.manifest.input("fit_from", fit_from);
    ctx.manifest.input("target", target);

    let rows = read_sweep_csv(&text)?;
    let seq = sweep_sequence(&rows, which)?;
    let digits = rows
        .iter()
        .map(|r| match which {
            Which::Back => r.lambda_back.len(),
            Which::Over => r.lambda_over.len(),
        })
        .max()
        .unwrap_or(30);
    let mut table = Table::new(&["sequence", "N", "value"]);
    let mut push_seq = |label: &str, s: &RealSequence| {
        for (n, v) in s.to_decimals(digits) {
            table.push(vec![label.to_string(), n.to_string(), v]);
        }
    };
    push_seq("raw", &seq);
    let mut filtered = seq.clone();
    for &(m, k) in &kz {
        filtered = kz_filter(&filtered, m, k)?;
    }
    let kz_label = kz.iter().map(|(m, k)| format!("KZ({m};{k})")).collect::<Vec<_>>().join("+");
    if !kz.is_empty() {
        push_seq(&kz_label, &filtered);
    }
    let prefix = if kz.is_empty() { String::new() } else { format!("{kz_label}+") };
    let raw_last = seq.last().expect("nonempty").clone();
    let raw_n = seq.end_index();
    let mut estimates = Vec::new();
    for l in &ladders {
        let acc = generalized_richardson(&filtered, l)?;
        let label = format!("{prefix}{}", ladder_label(l));
        push_seq(&label, &acc);
        let v = acc.last().expect("nonempty").clone();
        estimates.push((label, acc.end_index(), v));
    }
    let mut rd_json = Value::Null;
    if rd {
        let (r, rep) = raabe_duhamel(&filtered)?;
        let label = format!("{prefix}RD");
        push_seq(&label, &r);
        let v = r.last().expect("nonempty").clone();
        rd_json = json!({ "condition_holds": rep.condition_holds(), "tail_condition": rep.tail_condition, "flagged": rep.flagged });
        estimates.push((label, r.end_index(), v));
    }
    let mut fit_json = Value::Null;
    if fit {
        let grid: Vec<f64> = (10..=100).map(|i| i as f64 / 100.0).collect();
        let lo = fit_from.unwrap_or(0).max(filtered.start_index());
        let hi = filtered.end_index();
        if hi < 0 || (hi as u64) < lo + 3 {
            return Err(Error::Domain(format!("--fit-from {lo} leaves fewer than three differences")));
        }
        let f = exponent_fit(&filtered.slice(lo, hi as u64), &grid)?;
        ctx.say(&format!("fit: beta = {:.6}, gamma = {:.4}, pearson gamma = {:?}", f.beta, f.gamma, f.pearson_gamma));
        fit_json = json!({ "from": lo, "beta": f.beta, "gamma": f.gamma, "pearson_gamma": f.pearson_gamma });
    }
    let file = {
        let stem = ctx.stem.clone();
        ctx.emit_table(&stem, &table)?
    };

    let dist = |v: f64| target.map(|t| (v - t).abs());
    let raw_dist = dist(raw_last.to_f64());
    ctx.say(&format!("raw {} N = {raw_n}: {}", which.name(), float_to_decimal(&raw_last, 15)));
    let mut est_json = Vec::new();
    for (label, n, v) in &estimates {
        let d = dist(v.to_f64());
        ctx.say(&format!("{label} N = {n}: {}", float_to_decimal(v, 15)));
        est_json.push(json!({
            "label": label,
            "N": n,
            "value": float_to_decimal(v, digits),
            "distance_to_target": d,
            "closer_than_raw": d.zip(raw_dist).map(|(a, b)| a < b),
        }));
    }
    let finals: Vec<f64> = estimates.iter().map(|e| e.2.to_f64()).collect();
    let bound_pair = if finals.is_empty() {
        Value::Null
    } else {
        let lo = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ctx.say(&format!("bound pair: {lo:.12} <= limit <= {hi:.12}"));
        json!([lo, hi])
    };
    ctx.say(&format!("wrote {file}"));
    let tail: Vec<String> =
        seq.to_decimals(digits).into_iter().rev().take(5).map(|(n, v)| format!("{n}:{v}")).collect();
    Ok(Outcome::ok(json!({
        "which": which.name(),
        "raw": { "N": raw_n, "value": float_to_decimal(&raw_last, digits), "distance_to_target": raw_dist },
        "raw_tail": tail,
        "estimates": est_json,
        "bound_pair": bound_pair,
        "rd": rd_json,
        "fit": fit_json,
    })))
}

/// The chosen column of a sweep as a sequence indexed by `N`.
pub fn sweep_sequence(rows: &[SweepRow], which: Which) -> Result<RealSequence, Error> {
    let first = rows.first().ok_or_else(|| Error::Parse("sweep file has no rows".into()))?;
    for (i, r) in rows.iter().enumerate() {
        if r.n != first.n + i {
            return Err(Error::Parse(format!("sweep rows must have consecutive N; found {} after {}", r.n, first.n + i - 1)));
        }
    }
    let vals: Vec<&str> = rows
        .iter()
        .map(|r| match which {
            Which::Back => r.lambda_back.as_str(),
            Which::Over => r.lambda_over.as_str(),
        })
        .collect();
    let digits = vals.iter().map(|s| s.len()).max().unwrap_or(30) as u32;
    RealSequence::from_decimals(first.n as u64, &vals, digits_to_bits(digits) + 64)
}

type PGrid = (Option<f64>, Option<f64>, Option<usize>, Option<Spacing>);

fn eigvec(
    ctx: &mut Ctx,
    setup: &SetupArgs,
    n: Option<usize>,
    which: Option<Which>,
    pgrid: PGrid,
    p34: bool,
    distance_to: Option<usize>,
) -> Result<Outcome, Error> {
    let cfg = &ctx.cfg;
    let n: usize = cfg.pick_opt(n, "N")?.ok_or_else(|| Error::Parse("--N is required".into()))?;
    let which = cfg.pick(which, "which", Which::Back)?;
    let pmin: f64 = cfg.pick(pgrid.0, "pmin", 1e-3)?;
    let pmax: f64 = cfg.pick(pgrid.1, "pmax", 100.0)?;
    let points: usize = cfg.pick(pgrid.2, "points", 200)?;
    let spacing = cfg.pick(pgrid.3, "spacing", Spacing::Log)?;
    let p34 = p34 || cfg.get::<bool>("p34")?.unwrap_or(false);
    let distance_to = cfg.pick_opt(distance_to, "distance_to")?;
    if n < 1 {
        return Err(Error::Domain("--N must be at least 1".into()));
    }
    if !(pmin > 0.0 && pmax > pmin && pmax.is_finite()) || points < 2 {
        return Err(Error::Domain("need 0 < pmin < pmax and at least 2 points".into()));
    }
    if let Some(d) = distance_to {
        if d < 1 || d >= n {
            return Err(Error::Domain(format!("--distance-to must lie in 1..N, got {d}")));
        }
    }
    for (k, v) in [("pmin", json!(pmin)), ("pmax", json!(pmax)), ("points", json!(points))] {
        ctx.manifest.input(k, v);
    }
    ctx.manifest.input("N", n);
    ctx.manifest.input("which", which.name());
    ctx.manifest.input("spacing", format!("{spacing:?}").to_lowercase());
    ctx.manifest.input("p34", p34);
    ctx.manifest.input("distance_to", distance_to);
    let s = resolve_setup(ctx, setup, n)?;
    ctx.stem = format!("eigvec_M{}_N{n}_{}", s.grid.m(), which.name());
    let pair = build_pair(&s.grid, &s.spec, &s.policy, ctx.cache()?)?;
    ctx.record_store(&s.grid, &s.spec)?;
    let sw_setup = SweepSetup::new(s.grid.clone(), s.spec.clone(), s.policy.clone());
    let sw = sweep_pair(&sw_setup, &pair, |_| {})?;
    let pick = |k: usize| {
        let r = sw.record(k).expect("every N in 1..=Nmax is solved");
        match which {
            Which::Back => (&r.lambda_back, &r.v_back),
            Which::Over => (&r.lambda_over, &r.v_over),
        }
    };
    let (lambda, v) = pick(n);
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            match spacing {
                Spacing::Lin => pmin + t * (pmax - pmin),
                Spacing::Log => (pmin.ln() + t * (pmax / pmin).ln()).exp(),
            }
        })
        .collect();
    let scale = if p34 { ProfileScale::P34 } else { ProfileScale::None };
    let prof = eigvec_profile(v, &s.spec, &grid, scale)?;
    let mut t = Table::new(&["p", "re", "im"]);
    for q in &prof {
        t.push(vec![format!("{:e}", q.p), format!("{:e}", q.re), format!("{:e}", q.im)]);
    }
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    let peak = prof
        .iter()
        .max_by(|a, b| a.re.hypot(a.im).total_cmp(&b.re.hypot(b.im)))
        .map(|q| q.p)
        .unwrap_or(f64::NAN);
    let distance = match distance_to {
        Some(d) => {
            let (_, w) = pick(d);
            let x = eigvec_distance((&s.spec, w), (&s.spec, v), &pair)?;
            ctx.say(&format!("distance(v_{d}, v_{n}) = {x:e}"));
            Some(x)
        }
        None => None,
    };
    ctx.say(&format!("lambda_{}({n}) = {}", which.name(), float_to_decimal(lambda, 20)));
    ctx.say(&format!("wrote {file}"));
    Ok(Outcome::ok(json!({
        "N": n,
        "which": which.name(),
        "lambda": float_to_decimal(lambda, s.policy.solver_digits as usize),
        "peak_p": peak,
        "distance": distance,
    })))
}

fn trial(ctx: &mut Ctx, m: Option<usize>, epsilon: Option<f64>) -> Result<Outcome, Error> {
    let m: usize = ctx.cfg.pick(m, "M", 2)?;
    let eps: f64 = ctx.cfg.pick(epsilon, "epsilon", 0.1)?;
    ctx.manifest.input("M", m);
    ctx.manifest.input("epsilon", eps);
    ctx.stem = format!("trial_M{m}_eps{eps}");
    let r = trial_state_expectation(m, eps)?;
    let sk = s_and_k();
    let mut t = Table::new(&["M", "epsilon", "value", "bound", "error", "holds"]);
    t.push(vec![
        m.to_string(),
        eps.to_string(),
        format!("{:e}", r.value),
        format!("{:e}", r.bound),
        format!("{:e}", r.error),
        r.holds().to_string(),
    ]);
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    ctx.say(&format!("M = {m}, epsilon = {eps}: value {:.6e} (+/- {:.1e}) vs bound {:.6e}", r.value, r.error, r.bound));
    if let Some(w) = &r.warning {
        ctx.say(&format!("warning: {w}"));
    }
    ctx.say(&format!("wrote {file}"));
    let results = json!({
        "M": m, "epsilon": eps, "value": r.value, "bound": r.bound, "error": r.error,
        "holds": r.holds(), "warning": r.warning, "eta0": sk.eta0, "k": sk.k,
    });
    let failed = (!r.holds()).then(|| {
        ("check_failed".to_string(), format!("trial value {:e} is below the bound {:e}", r.value, r.bound), EXIT_CHECK_FAILED)
    });
    Ok(Outcome { results, failed_check: failed })
}

/// `kind:key=value,…` into an ensemble.
pub fn parse_ensemble(s: &str) -> Result<PhaseSpaceEnsemble, Error> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(kind.trim().to_string()));
    for kv in rest.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("ensemble parameter {kv:?} is not key=value")))?;
        let x: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("ensemble parameter {k} = {v:?}")))?;
        obj.insert(k.trim().to_string(), json!(x));
    }
    let e: PhaseSpaceEnsemble =
        serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Parse(format!("ensemble {s:?}: {e}")))?;
    e.validate()?;
    Ok(e)
}

fn classical(
    ctx: &mut Ctx,
    setup: &SetupArgs,
    ensemble: Option<String>,
    samples: Option<u64>,
    seed: Option<u64>,
) -> Result<Outcome, Error> {
    let spec = ctx.cfg.pick(ensemble, "ensemble", "gauss_exp:x_mean=0,x_sd=1,p_mean=1".to_string())?;
    let samples: u64 = ctx.cfg.pick(samples, "samples", 100_000)?;
    let seed: u64 = ctx.cfg.pick(seed, "seed", 0)?;
    let ens = parse_ensemble(&spec)?;
    ctx.manifest.input("ensemble", &ens);
    ctx.manifest.input("samples", samples);
    ctx.manifest.input("seed", seed);
    let s = resolve_setup(ctx, setup, 0)?;
    let kind = spec.split(':').next().unwrap_or("ensemble").trim().to_string();
    ctx.stem = format!("classical_M{}_{kind}_s{seed}", s.grid.m());
    let est = classical_mc(&ens, &s.grid, samples, seed)?;
    let mut t = Table::new(&["interval", "estimate"]);
    for (j, v) in est.per_interval.iter().enumerate() {
        t.push(vec![(j + 1).to_string(), format!("{v:e}")]);
    }
    t.push(vec!["total".into(), format!("{:e}", est.estimate)]);
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    let se4 = 4.0 * est.std_error;
    let within = est.estimate >= -1.0 - se4 && est.estimate <= se4;
    ctx.say(&format!("estimate {:.6} +/- {:.2e} over {} samples", est.estimate, est.std_error, est.samples));
    ctx.say(&format!("wrote {file}"));
    let results = json!({
        "M": s.grid.m(), "estimate": est.estimate, "std_error": est.std_error,
        "samples": est.samples, "per_interval": est.per_interval, "within_classical_bound": within,
    });
    let failed = (!within).then(|| {
        ("check_failed".to_string(), format!("estimate {} leaves [-1, 0] by more than 4 standard errors", est.estimate), EXIT_CHECK_FAILED)
    });
    Ok(Outcome { results, failed_check: failed })
}

fn certify(
    ctx: &mut Ctx,
    setup: &SetupArgs,
    n_max: Option<usize>,
    lambda_bound: Option<f64>,
) -> Result<Outcome, Error> {
    let mut setup = sweep_setup(ctx, setup, n_max)?;
    let lb: f64 = ctx.cfg.pick(lambda_bound, "lambda_bound", setup.lambda_bound)?;
    if !(lb > 0.0 && lb.is_finite()) {
        return Err(Error::Domain(format!("--lambda-bound must be positive, got {lb}")));
    }
    setup.lambda_bound = lb;
    ctx.manifest.input("lambda_bound", lb);
    ctx.stem = format!("certify_M{}_N{}", setup.m(), setup.n_max());
    let pair = build_pair(&setup.grid, &setup.spec, &setup.policy, ctx.cache()?)?;
    ctx.record_store(&setup.grid, &setup.spec)?;
    let sw = sweep_pair(&setup, &pair, |_| {})?;
    let digits = sw.csv_digits();
    let mut t = Table::new(&[
        "N",
        "lambda_back",
        "lambda_over",
        "c_max",
        "delta_a",
        "delta_p",
        "min_gram_eig",
        "radius_back",
        "radius_over",
        "solver_back",
        "solver_over",
    ]);
    let mut worst: f64 = 0.0;
    for r in &sw.records {
        let c = &r.certificate;
        worst = worst.max(c.c_max);
        t.push(vec![
            r.n.to_string(),
            float_to_decimal(&r.lambda_back, digits),
            float_to_decimal(&r.lambda_over, digits),
            radius_str(c.c_max),
            radius_str(c.delta_a),
            radius_str(c.delta_p),
            radius_str(c.min_gram_eig),
            radius_str(c.radii[1]),
            radius_str(c.radii[0]),
            radius_str(c.solver_radii[1]),
            radius_str(c.solver_radii[0]),
        ]);
    }
    let stem = ctx.stem.clone();
    let file = ctx.emit_table(&stem, &t)?;
    let last = sw.last();
    ctx.say(&format!("certified N = 1..={} with lambda_b = {lb}; largest C_max = {worst:e}", setup.n_max()));
    ctx.say(&format!("wrote {file}"));
    Ok(Outcome::ok(json!({
        "M": setup.m(),
        "Nmax": setup.n_max(),
        "lambda_bound": lb,
        "max_c_max": worst,
        "cert_back": last.cert_back,
        "cert_over": last.cert_over,
    })))
}

fn report(ctx: &mut Ctx) -> Result<Outcome, Error> {
    ctx.stem = "report".into();
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&ctx.out_dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    paths.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".manifest.json") && n != "report.manifest.json")
    });
    paths.sort();
    let mut runs = Vec::new();
    let mut summary = String::new();
    for p in &paths {
        let m = Manifest::read(p)?;
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().trim_end_matches(".manifest.json").to_string();
        let status = serde_json::to_value(m.status).unwrap_or(Value::Null);
        let headline = headline(&m.command, &m.results);
        let _ = writeln!(summary, "{name} [{}]: {headline}", status.as_str().unwrap_or("?"));
        runs.push(json!({
            "run": name,
            "command": m.command,
            "status": status,
            "inputs": m.inputs,
            "results": m.results,
            "outputs": m.outputs,
        }));
    }
    for l in summary.lines() {
        ctx.say(l);
    }
    let doc = json!({ "schema": "backflow-report-v1", "runs": runs });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    ctx.emit("report.json", text.as_bytes())?;
    ctx.say(&format!("collated {} runs into report.json", paths.len()));
    Ok(Outcome::ok(json!({ "runs": paths.len() })))
}

fn headline(command: &str, r: &Value) -> String {
    let f = |k: &str| r.get(k).map(|v| v.to_string().trim_matches('"').to_string()).unwrap_or_else(|| "-".into());
    match command {
        "sweep" => format!(
            "lambda_back({}) = {}, lambda_over = {}, violations = {}",
            f("Nmax"),
            f("lambda_back"),
            f("lambda_over"),
            f("monotonicity_violations")
        ),
        "accelerate" => format!("bound pair {}", f("bound_pair")),
        "trial" => format!("value {} vs bound {} (holds: {})", f("value"), f("bound"), f("holds")),
        "classical" => format!("estimate {} +/- {}", f("estimate"), f("std_error")),
        "certify" => format!("max C_max {}", f("max_c_max")),
        "eigvec" => format!("lambda {} peak p {}", f("lambda"), f("peak_p")),
        _ => r.to_string(),
    }
}

fn cache_admin(ctx: &mut Ctx, action: CacheAction) -> Result<Outcome, Error> {
    let Some(dir) = ctx.cache_dir.clone() else {
        return Err(Error::Domain("cache administration needs a cache directory (drop --no-cache)".into()));
    };
    ctx.stem = match &action {
        CacheAction::Verify { .. } => "cache_verify",
        CacheAction::Gc { .. } => "cache_gc",
        CacheAction::Export { .. } => "cache_export",
        CacheAction::Import { .. } => "cache_import",
    }
    .into();
    ctx.manifest.input("cache", dir.display().to_string());
    if !dir.is_dir() && !matches!(action, CacheAction::Import { .. }) {
        return Err(Error::Domain(format!("cache directory {} does not exist", dir.display())));
    }
    match action {
        CacheAction::Verify { fraction } => {
            let fraction: f64 = ctx.cfg.pick(fraction, "fraction", 0.01)?;
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Domain(format!("--fraction must lie in (0, 1], got {fraction}")));
            }
            ctx.manifest.input("fraction", fraction);
            let rep = cache::verify(ctx.cache()?, fraction)?;
            ctx.say(&format!(
                "{} stores, {} records, {} recomputed, {} integrity failures, {} value failures",
                rep.stores,
                rep.records,
                rep.sampled,
                rep.integrity_failures.len(),
                rep.value_failures.len()
            ));
            for (k, why) in rep.integrity_failures.iter().chain(&rep.value_failures) {
                ctx.say(&format!("FAILED {k}: {why}"));
            }
            let keys: Vec<&String> = rep.integrity_failures.iter().chain(&rep.value_failures).map(|p| &p.0).collect();
            let results = json!({
                "stores": rep.stores,
                "records": rep.records,
                "sampled": rep.sampled,
                "integrity_failures": rep.integrity_failures,
                "value_failures": rep.value_failures,
            });
            let failed = (!rep.ok()).then(|| {
                let keys: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
                ("cache_integrity".to_string(), format!("failing records: {}", keys.join(", ")), 5)
            });
            Ok(Outcome { results, failed_check: failed })
        }
        CacheAction::Gc { key } => {
            let key = ctx.cfg.pick_opt(key, "key")?;
            ctx.manifest.input("key", &key);
            let rep = cache::gc(ctx.cache()?, key.as_deref())?;
            ctx.say(&format!(
                "removed {} stores and {} stray files; reindexed {}",
                rep.removed_stores.len(),
                rep.removed_files.len(),
                rep.reindexed
            ));
            Ok(Outcome::ok(json!({
                "removed_stores": rep.removed_stores,
                "removed_files": rep.removed_files,
                "reindexed": rep.reindexed,
            })))
        }
        CacheAction::Export { to } => {
            ctx.manifest.input("to", to.display().to_string());
            let n = cache::export(ctx.cache()?, &to)?;
            let digest = file_digest(&to)?;
            ctx.say(&format!("exported {n} records to {}", to.display()));
            Ok(Outcome::ok(json!({ "records": n, "bundle": to.display().to_string(), "sha256": digest })))
        }
        CacheAction::Import { from } => {
            ctx.manifest.input("from", from.display().to_string());
            ctx.manifest.input("from_sha256", file_digest(&from)?);
            let n = cache::import(ctx.cache()?, &from)?;
            ctx.say(&format!("imported {n} records from {}", from.display()));
            Ok(Outcome::ok(json!({ "records": n })))
        }
    }
}
