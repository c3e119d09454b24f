//! Flat `key = value` configuration files.
//!
//! Precedence, highest first: command-line flag, environment variable (cache
//! and output directories only), config file, built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use backflow::Error;

pub const ENV_CACHE_DIR: &str = "BACKFLOW_CACHE_DIR";
pub const ENV_OUT_DIR: &str = "BACKFLOW_OUT_DIR";

/// Parsed config file. Keys are normalized to lowercase with `-` → `_`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
}

pub fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    /// `#` starts a comment; blank lines are ignored; duplicate keys are an
    /// error.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse(format!("config line {}: expected key=value, got {raw:?}", i + 1)));
            };
            let k = normalize_key(k);
            if k.is_empty() {
                return Err(Error::Parse(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("config line {}: duplicate key {k}", i + 1)));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        ConfigFile::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Error> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Error> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }
}

/// Directory resolution: flag, then environment, then config, then default.
pub fn resolve_dir(flag: Option<PathBuf>, env_key: &str, cfg: &ConfigFile, key: &str, default: &str) -> PathBuf {
    flag.or_else(|| std::env::var_os(env_key).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.raw(key).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default))
}
