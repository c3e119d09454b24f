//! Run manifests and machine-readable error records. The JSON layout is
//! described in `docs/manifest.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use backflow::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "backflow-manifest-v1";
pub const ERROR_SCHEMA: &str = "backflow-error-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    /// Some outputs were written but the run did not finish; such files
    /// carry a `.partial` suffix.
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheDigest {
    pub store: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub backflow: String,
    pub cli: String,
    pub mpfr: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            backflow: backflow_version().into(),
            cli: env!("CARGO_PKG_VERSION").into(),
            mpfr: backflow::mpcore::mpfr_version(),
        }
    }
}

fn backflow_version() -> &'static str {
    // both crates share the workspace version
    env!("CARGO_PKG_VERSION")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub status: Status,
    /// Fully resolved inputs (flags, config file and defaults merged).
    pub inputs: BTreeMap<String, Value>,
    pub versions: Versions,
    pub outputs: Vec<OutputFile>,
    pub cache: Vec<CacheDigest>,
    /// Headline numbers of the run.
    pub results: Value,
    pub wall_time_seconds: f64,
    pub error: Option<ErrorRecord>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            status: Status::Failed,
            inputs: BTreeMap::new(),
            versions: Versions::current(),
            outputs: Vec::new(),
            cache: Vec::new(),
            results: Value::Null,
            wall_time_seconds: 0.0,
            error: None,
        }
    }

    pub fn input(&mut self, key: &str, v: impl Serialize) {
        self.inputs.insert(key.into(), serde_json::to_value(v).expect("serializable input"));
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Parse(format!("{}: unsupported manifest schema {}", path.display(), m.schema)));
        }
        Ok(m)
    }
}

/// Machine-readable description of a failed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema: String,
    pub command: String,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
    /// Structured fields of the error, when it has any.
    pub details: Value,
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Branch(_) => "branch",
        Error::PrecisionExhausted { .. } => "precision_exhausted",
        Error::CholeskyBreakdown { .. } => "cholesky_breakdown",
        Error::IterationCeiling(_) => "iteration_ceiling",
        Error::Uncertifiable { .. } => "uncertifiable",
        Error::CacheIntegrity { .. } => "cache_integrity",
        Error::FitRejected(_) => "fit_rejected",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
    }
}

/// Exit status per error kind.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => 2,
        Error::Domain(_) | Error::Branch(_) | Error::FitRejected(_) => 3,
        Error::PrecisionExhausted { .. }
        | Error::CholeskyBreakdown { .. }
        | Error::IterationCeiling(_)
        | Error::Uncertifiable { .. } => 4,
        Error::CacheIntegrity { .. } => 5,
        Error::Io(_) => 6,
    }
}

impl ErrorRecord {
    pub fn from_error(command: &str, e: &Error) -> Self {
        let details = match e {
            Error::PrecisionExhausted { digits, achieved } => serde_json::json!({ "digits": digits, "achieved": achieved }),
            Error::CholeskyBreakdown { pivot, dim } => serde_json::json!({ "pivot": pivot, "dim": dim }),
            Error::Uncertifiable { required_digits, c_max } => {
                serde_json::json!({ "required_digits": required_digits, "c_max": c_max })
            }
            Error::CacheIntegrity { key, reason } => serde_json::json!({ "key": key, "reason": reason }),
            _ => Value::Null,
        };
        ErrorRecord {
            schema: ERROR_SCHEMA.into(),
            command: command.into(),
            kind: error_kind(e).into(),
            message: e.to_string(),
            exit_code: exit_code(e),
            details,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, Error> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Write through a temporary file and rename, so readers never observe a
/// half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

/// `<path>.partial`
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}
