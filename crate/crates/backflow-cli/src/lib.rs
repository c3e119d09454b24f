//! The `backflow` command-line tool.
//!
//! Every run resolves its inputs (flag, environment, config file, default),
//! writes its artifacts to the output directory and leaves a
//! `<stem>.manifest.json` next to them. Failures exit nonzero and emit an
//! error record on stderr and in `<stem>.error.json`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;
pub mod manifest;

pub use commands::{Ctx, Outcome};

/// Exit status of a run whose computation succeeded but whose checked
/// property failed (e.g. a trial-state inequality).
pub const EXIT_CHECK_FAILED: i32 = 7;

#[derive(Parser, Debug)]
#[command(name = "backflow", version, about = "Certified spectra of repeated quantum backflow operators")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Element cache directory [env: BACKFLOW_CACHE_DIR] [default: .backflow-cache]
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory [env: BACKFLOW_OUT_DIR] [default: backflow-out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Format of tabular artifacts.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Neither read nor write the element cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            o => Err(format!("unknown format {o}")),
        }
    }
}

/// Time grid and basis parameters shared by the operator commands.
#[derive(Args, Debug, Clone, Default)]
pub struct SetupArgs {
    /// Number of intervals of an equally spaced grid [default: 1]
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Spacing of the equally spaced grid [default: 1]
    #[arg(long = "T")]
    pub t: Option<String>,
    /// Explicit grid `t_1,…,t_2M` (overrides --M/--T); entries like `-3/2`, `0.5`, `2/pi`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Basis scale [default: 2M/pi]
    #[arg(long)]
    pub a: Option<String>,
    /// Basis exponent [default: -1/4]
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Decimal digits of matrix elements [default: N + 30]
    #[arg(long)]
    pub element_digits: Option<u32>,
    /// Decimal digits targeted by the eigensolver [default: N + 20]
    #[arg(long)]
    pub solver_digits: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Back,
    Over,
}

impl std::str::FromStr for Which {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "back" => Ok(Which::Back),
            "over" => Ok(Which::Over),
            o => Err(format!("expected back or over, got {o}")),
        }
    }
}

impl Which {
    pub fn name(self) -> &'static str {
        match self {
            Which::Back => "back",
            Which::Over => "over",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Lin,
    Log,
}

impl std::str::FromStr for Spacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "lin" => Ok(Spacing::Lin),
            "log" => Ok(Spacing::Log),
            o => Err(format!("expected lin or log, got {o}")),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gram matrix elements `⟨ψ_m|ψ_n⟩`.
    Gram {
        /// Row index (config key `row`).
        #[arg(long = "m")]
        row: Option<usize>,
        /// Column index (config key `col`).
        #[arg(long = "n")]
        col: Option<usize>,
        /// Emit the whole `K×K` block instead of one element.
        #[arg(long)]
        block: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<String>,
        /// Decimal digits [default: 30]
        #[arg(long)]
        digits: Option<u32>,
    },
    /// Certified elements of the M-fold backflow operator.
    Matrix {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long = "m")]
        row: Option<usize>,
        #[arg(long = "n")]
        col: Option<usize>,
        #[arg(long)]
        block: Option<usize>,
    },
    /// Extreme eigenvalues for N = 1..=Nmax with certificates.
    Sweep {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long = "Nmax")]
        n_max: Option<usize>,
    },
    /// Sequence acceleration of a stored sweep.
    Accelerate {
        /// Sweep CSV written by `sweep`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        which: Option<Which>,
        /// Exponent ladder such as `0,0.5,1`; repeatable [default: 0,0.5]
        #[arg(long)]
        ladder: Vec<String>,
        /// KZ filter `m,k` applied before the ladders; repeatable.
        #[arg(long)]
        kz: Vec<String>,
        /// Also apply Raabe–Duhamel.
        #[arg(long)]
        rd: bool,
        /// Fit the power law of the successive differences of the filtered
        /// sequence.
        #[arg(long)]
        fit: bool,
        /// First N used by the fit [default: start of the filtered sequence]
        #[arg(long)]
        fit_from: Option<u64>,
        /// Reference value for distance reporting.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<f64>,
    },
    /// Momentum-space profile of an extreme eigenvector.
    Eigvec {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long, value_enum)]
        which: Option<Which>,
        #[arg(long)]
        pmin: Option<f64>,
        #[arg(long)]
        pmax: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_enum)]
        spacing: Option<Spacing>,
        /// Multiply the profile by p^{3/4}.
        #[arg(long)]
        p34: bool,
        /// Also report the P-norm distance to the vector at this smaller N.
        #[arg(long)]
        distance_to: Option<usize>,
    },
    /// Trial-state expectation against its analytic lower bound.
    Trial {
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Monte-Carlo estimate of the classical flux balance.
    Classical {
        #[command(flatten)]
        setup: SetupArgs,
        /// `kind:key=value,…`, e.g. `gauss_exp:x_mean=0,x_sd=1,p_mean=1`.
        #[arg(long, allow_hyphen_values = true)]
        ensemble: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-issue the certificate table of a sweep.
    Certify {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long = "Nmax")]
        n_max: Option<usize>,
        /// Bound on the spectral radius used by the certificates [default: M]
        #[arg(long)]
        lambda_bound: Option<f64>,
    },
    /// Collate the manifests of the output directory into `report.json`.
    Report,
    /// Element cache administration.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum CacheAction {
    /// Check every checksum and recompute a sample of the records.
    Verify {
        /// Fraction of records recomputed [default: 0.01]
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Remove the stores of a key (stem or grid hash, or `all`) and stray files.
    Gc {
        #[arg(long)]
        key: Option<String>,
    },
    /// Write a portable bundle of every record.
    Export {
        #[arg(long)]
        to: PathBuf,
    },
    /// Merge a bundle into the cache.
    Import {
        #[arg(long)]
        from: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gram { .. } => "gram",
            Command::Matrix { .. } => "matrix",
            Command::Sweep { .. } => "sweep",
            Command::Accelerate { .. } => "accelerate",
            Command::Eigvec { .. } => "eigvec",
            Command::Trial { .. } => "trial",
            Command::Classical { .. } => "classical",
            Command::Certify { .. } => "certify",
            Command::Report => "report",
            Command::Cache { action } => match action {
                CacheAction::Verify { .. } => "cache-verify",
                CacheAction::Gc { .. } => "cache-gc",
                CacheAction::Export { .. } => "cache-export",
                CacheAction::Import { .. } => "cache-import",
            },
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit
/// status. Human-readable summaries go to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    commands::execute(cli, out)
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
