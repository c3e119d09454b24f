//! Persistent, append-only cache of exact matrix elements.
//!
//! Layout: one data file `<stem>.elements` per (grid, basis a, δ) with a
//! versioned header line, plus an index sidecar `<stem>.idx` mapping
//! `(m, n, digits)` to byte offsets. Each record line is
//!
//! ```text
//! m <TAB> n <TAB> digits <TAB> re <TAB> im <TAB> rad_exp <TAB> sha256
//! ```
//!
//! where `re`/`im` are decimal midpoints, the radius is at most
//! `10^rad_exp`, and the checksum covers the key fields and the payload.
//! Appends are single `write` calls on an `O_APPEND` handle, so distinct keys
//! can be inserted concurrently; the index is rewritten atomically.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::basis::BasisSpec;
use super::grid::TimeGrid;
use crate::Error;

pub const CACHE_VERSION: u32 = 1;
const DATA_EXT: &str = "elements";
const INDEX_EXT: &str = "idx";

static APPEND_LOCK: Mutex<()> = Mutex::new(());

/// Identity of one stored element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub grid_hash: String,
    pub a: String,
    pub delta: String,
    pub m: usize,
    pub n: usize,
    pub digits: u32,
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "grid={} a={} delta={} m={} n={} digits={}",
            self.grid_hash, self.a, self.delta, self.m, self.n, self.digits
        )
    }
}

/// A stored element: decimal midpoints and a radius exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub re: String,
    pub im: String,
    pub rad_exp: i64,
}

impl CacheRecord {
    fn checksum(&self) -> String {
        let k = &self.key;
        let payload = format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}",
            k.grid_hash, k.a, k.delta, k.m, k.n, k.digits, self.re, self.im, self.rad_exp
        );
        Sha256::digest(payload.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            self.key.m,
            self.key.n,
            self.key.digits,
            self.re,
            self.im,
            self.rad_exp,
            self.checksum()
        )
    }
}

/// The header identifying a store file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreHeader {
    pub version: u32,
    pub grid: String,
    pub grid_hash: String,
    pub a: String,
    pub delta: String,
}

impl StoreHeader {
    fn line(&self) -> String {
        format!(
            "# backflow element cache v{}\tgrid={}\tgrid_hash={}\ta={}\tdelta={}\n",
            self.version, self.grid, self.grid_hash, self.a, self.delta
        )
    }

    fn parse(line: &str) -> Option<StoreHeader> {
        let mut parts = line.trim_end().split('\t');
        let version = parts.next()?.strip_prefix("# backflow element cache v")?.parse().ok()?;
        let mut get = |k: &str| parts.next()?.strip_prefix(k).map(str::to_string);
        Some(StoreHeader {
            version,
            grid: get("grid=")?,
            grid_hash: get("grid_hash=")?,
            a: get("a=")?,
            delta: get("delta=")?,
        })
    }

    /// File stem shared by the data file and its index.
    pub fn stem(&self) -> String {
        let d = Sha256::digest(format!("{}|{}|{}", self.grid, self.a, self.delta).as_bytes());
        let h: String = d.iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!("{}-{}", self.grid_hash, h)
    }
}

fn header_for(grid: &TimeGrid, spec: &BasisSpec) -> StoreHeader {
    StoreHeader {
        version: CACHE_VERSION,
        grid: grid.canonical(),
        grid_hash: grid.hash(),
        a: spec.a.to_string(),
        delta: spec.delta.to_string(),
    }
}

/// Handle on a cache directory (or a disabled cache).
#[derive(Clone, Debug, Default)]
pub struct ElementCache {
    root: Option<PathBuf>,
}

impl ElementCache {
    /// A cache that stores nothing.
    pub fn disabled() -> Self {
        ElementCache { root: None }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, Error> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(ElementCache { root: Some(dir.as_ref().to_path_buf()) })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// The store for `(grid, spec)`, created on first use.
    pub fn store(&self, grid: &TimeGrid, spec: &BasisSpec) -> Result<Option<Store>, Error> {
        let Some(root) = &self.root else { return Ok(None) };
        let header = header_for(grid, spec);
        Store::open_or_create(root, header).map(Some)
    }

    /// Paths of every data file, sorted.
    pub fn data_files(&self) -> Result<Vec<PathBuf>, Error> {
        let Some(root) = &self.root else { return Ok(vec![]) };
        let mut v: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == DATA_EXT))
            .collect();
        v.sort();
        Ok(v)
    }

    /// Open every store in the directory.
    pub fn stores(&self) -> Result<Vec<Store>, Error> {
        self.data_files()?.into_iter().map(|p| Store::open_path(&p)).collect()
    }
}

/// One data file and its in-memory index.
#[derive(Debug)]
pub struct Store {
    data_path: PathBuf,
    idx_path: PathBuf,
    pub header: StoreHeader,
    index: HashMap<(usize, usize, u32), u64>,
}

impl Store {
    fn open_or_create(root: &Path, header: StoreHeader) -> Result<Store, Error> {
        let stem = header.stem();
        let data_path = root.join(format!("{stem}.{DATA_EXT}"));
        if !data_path.exists() {
            let _g = APPEND_LOCK.lock().expect("poisoned");
            if !data_path.exists() {
                let tmp = root.join(format!(".{stem}.tmp"));
                fs::write(&tmp, header.line())?;
                fs::rename(&tmp, &data_path)?;
            }
        }
        let s = Store::open_path(&data_path)?;
        if s.header != header {
            return Err(Error::CacheIntegrity {
                key: stem,
                reason: "store header does not match its (grid, spec)".into(),
            });
        }
        Ok(s)
    }

    /// Open an existing data file, rebuilding its index if stale or missing.
    pub fn open_path(data_path: &Path) -> Result<Store, Error> {
        let bytes = fs::read(data_path)?;
        let stem = data_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let bad = |reason: &str| Error::CacheIntegrity { key: stem.clone(), reason: reason.into() };
        let first_nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..first_nl])
            .ok()
            .and_then(StoreHeader::parse)
            .ok_or_else(|| bad("malformed header"))?;
        if header.version != CACHE_VERSION {
            return Err(bad(&format!("unsupported cache version {}", header.version)));
        }
        let idx_path = data_path.with_extension(INDEX_EXT);
        let mut store = Store { data_path: data_path.to_path_buf(), idx_path, header, index: HashMap::new() };
        if !store.load_index(bytes.len() as u64) {
            store.rebuild_index(&bytes)?;
        }
        Ok(store)
    }

    fn load_index(&mut self, data_len: u64) -> bool {
        let Ok(text) = fs::read_to_string(&self.idx_path) else { return false };
        let mut lines = text.lines();
        let Some(len) = lines.next().and_then(|h| h.strip_prefix("# index v1 len=")).and_then(|l| l.parse::<u64>().ok())
        else {
            return false;
        };
        if len != data_len {
            return false;
        }
        let mut index = HashMap::new();
        for l in lines {
            let f: Vec<&str> = l.split(' ').collect();
            let parsed = (|| Some(((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?), f.get(3)?.parse().ok()?)))();
            match parsed {
                Some((k, off)) => {
                    index.insert(k, off);
                }
                None => return false,
            }
        }
        self.index = index;
        true
    }

    fn rebuild_index(&mut self, bytes: &[u8]) -> Result<(), Error> {
        self.index.clear();
        let mut off = bytes.iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| p + 1);
        while off < bytes.len() {
            // a line without its newline is a torn append; it is never indexed
            let Some(end) = bytes[off..].iter().position(|&b| b == b'\n').map(|p| off + p) else { break };
            let line = String::from_utf8_lossy(&bytes[off..end]);
            let f: Vec<&str> = line.split('\t').collect();
            if let (Some(m), Some(n), Some(d)) = (
                f.first().and_then(|x| x.parse().ok()),
                f.get(1).and_then(|x| x.parse().ok()),
                f.get(2).and_then(|x| x.parse().ok()),
            ) {
                // first record for a key wins
                self.index.entry((m, n, d)).or_insert(off as u64);
            }
            off = end + 1;
        }
        self.write_index(bytes.len() as u64)
    }

    fn write_index(&self, data_len: u64) -> Result<(), Error> {
        let mut entries: Vec<_> = self.index.iter().collect();
        entries.sort();
        let mut s = format!("# index v1 len={data_len}\n");
        for ((m, n, d), off) in entries {
            s.push_str(&format!("{m} {n} {d} {off}\n"));
        }
        let tmp = self.idx_path.with_extension("idx.tmp");
        fs::write(&tmp, s)?;
        fs::rename(&tmp, &self.idx_path)?;
        Ok(())
    }

    pub fn data_path(&self) -> &Path {
        &self.data_path
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, m: usize, n: usize, digits: u32) -> bool {
        self.index.contains_key(&(m, n, digits))
    }

    fn key(&self, m: usize, n: usize, digits: u32) -> CacheKey {
        CacheKey {
            grid_hash: self.header.grid_hash.clone(),
            a: self.header.a.clone(),
            delta: self.header.delta.clone(),
            m,
            n,
            digits,
        }
    }

    fn parse_at(&self, bytes: &[u8], off: u64, want: (usize, usize, u32)) -> Result<CacheRecord, Error> {
        let key = self.key(want.0, want.1, want.2);
        let bad = |reason: &str| Error::CacheIntegrity { key: key.to_string(), reason: reason.into() };
        let off = off as usize;
        if off >= bytes.len() {
            return Err(bad("index points past end of data"));
        }
        let end = bytes[off..].iter().position(|&b| b == b'\n').map(|p| off + p).ok_or_else(|| bad("truncated record"))?;
        let line = std::str::from_utf8(&bytes[off..end]).map_err(|_| bad("record is not UTF-8"))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad("wrong field count"));
        }
        let (m, n, d) = (f[0].parse::<usize>(), f[1].parse::<usize>(), f[2].parse::<u32>());
        if (m.ok(), n.ok(), d.ok()) != (Some(want.0), Some(want.1), Some(want.2)) {
            return Err(bad("record key does not match index"));
        }
        let rec = CacheRecord {
            key: key.clone(),
            re: f[3].to_string(),
            im: f[4].to_string(),
            rad_exp: f[5].parse().map_err(|_| bad("bad radius exponent"))?,
        };
        if rec.checksum() != f[6] {
            return Err(bad("checksum mismatch"));
        }
        Ok(rec)
    }

    fn read_data(&self) -> Result<Vec<u8>, Error> {
        let mut v = Vec::new();
        File::open(&self.data_path)?.read_to_end(&mut v)?;
        Ok(v)
    }

    /// Fetch many records with one read of the data file.
    pub fn get_many(&self, keys: &[(usize, usize, u32)]) -> Result<Vec<Option<CacheRecord>>, Error> {
        let bytes = self.read_data()?;
        keys.iter()
            .map(|&k| match self.index.get(&k) {
                Some(&off) => self.parse_at(&bytes, off, k).map(Some),
                None => Ok(None),
            })
            .collect()
    }

    pub fn get(&self, m: usize, n: usize, digits: u32) -> Result<Option<CacheRecord>, Error> {
        Ok(self.get_many(&[(m, n, digits)])?.pop().flatten())
    }

    /// Every record in index order, verifying checksums; failures are
    /// returned alongside instead of aborting.
    pub fn all_records(&self) -> Result<(Vec<CacheRecord>, Vec<(CacheKey, String)>), Error> {
        let bytes = self.read_data()?;
        let mut keys: Vec<_> = self.index.iter().map(|(k, o)| (*k, *o)).collect();
        keys.sort();
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for (k, off) in keys {
            match self.parse_at(&bytes, off, k) {
                Ok(r) => ok.push(r),
                Err(Error::CacheIntegrity { reason, .. }) => bad.push((self.key(k.0, k.1, k.2), reason)),
                Err(e) => return Err(e),
            }
        }
        Ok((ok, bad))
    }

    /// Append records whose keys are not yet present.
    pub fn append(&mut self, recs: &[CacheRecord]) -> Result<usize, Error> {
        let _g = APPEND_LOCK.lock().expect("poisoned");
        // another handle may have appended since we opened
        let mut bytes = self.read_data()?;
        if bytes.last() != Some(&b'\n') {
            // drop the torn tail of an interrupted append
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            OpenOptions::new().write(true).open(&self.data_path)?.set_len(keep as u64)?;
            bytes.truncate(keep);
        }
        self.rebuild_index_if_stale(&bytes)?;
        let mut buf = String::new();
        let mut offs = Vec::new();
        let mut off = bytes.len() as u64;
        for r in recs {
            let k = (r.key.m, r.key.n, r.key.digits);
            if self.index.contains_key(&k) || offs.iter().any(|(kk, _)| *kk == k) {
                continue;
            }
            let line = r.to_line();
            offs.push((k, off));
            off += line.len() as u64;
            buf.push_str(&line);
        }
        if buf.is_empty() {
            return Ok(0);
        }
        let mut f = OpenOptions::new().append(true).open(&self.data_path)?;
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        let added = offs.len();
        self.index.extend(offs);
        self.write_index(off)?;
        Ok(added)
    }

    fn rebuild_index_if_stale(&mut self, bytes: &[u8]) -> Result<(), Error> {
        if !self.load_index(bytes.len() as u64) {
            self.rebuild_index(bytes)?;
        }
        Ok(())
    }
}

/// Summary of a garbage collection.
#[derive(Clone, Debug, Default)]
pub struct GcReport {
    pub removed_stores: Vec<String>,
    pub removed_files: Vec<String>,
    pub reindexed: usize,
}

/// Remove stores whose stem or grid hash equals `key` (all stores if `key`
/// is `"all"`), delete orphaned sidecars and temp files, and refresh stale
/// indexes of the remaining stores.
pub fn gc(cache: &ElementCache, key: Option<&str>) -> Result<GcReport, Error> {
    let mut rep = GcReport::default();
    let Some(root) = cache.root() else { return Ok(rep) };
    for p in cache.data_files()? {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let grid_hash = stem.split('-').next().unwrap_or("").to_string();
        if key.is_some_and(|k| k == "all" || k == stem || k == grid_hash) {
            fs::remove_file(&p)?;
            let _ = fs::remove_file(p.with_extension(INDEX_EXT));
            rep.removed_stores.push(stem);
        }
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(root)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let orphan_idx = p.extension().is_some_and(|e| e == INDEX_EXT) && !p.with_extension(DATA_EXT).exists();
        let tmp = name.ends_with(".tmp");
        if orphan_idx || tmp {
            fs::remove_file(&p)?;
            rep.removed_files.push(name);
        }
    }
    for p in cache.data_files()? {
        let before = fs::read_to_string(p.with_extension(INDEX_EXT)).ok();
        Store::open_path(&p)?;
        if fs::read_to_string(p.with_extension(INDEX_EXT)).ok() != before {
            rep.reindexed += 1;
        }
    }
    Ok(rep)
}

const BUNDLE_MAGIC: &str = "backflow-cache-bundle v1\n";

/// Write every data file, byte for byte, into one portable bundle.
pub fn export(cache: &ElementCache, out: &Path) -> Result<usize, Error> {
    let mut buf = BUNDLE_MAGIC.as_bytes().to_vec();
    let files = cache.data_files()?;
    for p in &files {
        let bytes = fs::read(p)?;
        let name = p.file_name().expect("file").to_string_lossy();
        buf.extend_from_slice(format!("file {name} {}\n", bytes.len()).as_bytes());
        buf.extend_from_slice(&bytes);
        buf.push(b'\n');
    }
    fs::write(out, buf)?;
    Ok(files.len())
}

/// Restore a bundle. Missing stores are written verbatim; records of stores
/// that already exist are merged (existing keys win).
pub fn import(cache: &ElementCache, bundle: &Path) -> Result<usize, Error> {
    let root = cache
        .root()
        .ok_or_else(|| Error::Domain("cannot import into a disabled cache".into()))?;
    let bytes = fs::read(bundle)?;
    let bad = |r: &str| Error::CacheIntegrity { key: bundle.display().to_string(), reason: r.into() };
    let mut pos = BUNDLE_MAGIC.len();
    if !bytes.starts_with(BUNDLE_MAGIC.as_bytes()) {
        return Err(bad("not a cache bundle"));
    }
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    while pos < bytes.len() {
        let nl = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated bundle"))? + pos;
        let head = std::str::from_utf8(&bytes[pos..nl]).map_err(|_| bad("bad entry header"))?;
        let mut it = head.split(' ');
        let (Some("file"), Some(name), Some(len)) = (it.next(), it.next(), it.next()) else {
            return Err(bad("bad entry header"));
        };
        if name.contains('/') || name.contains("..") || !name.ends_with(DATA_EXT) {
            return Err(bad("unsafe file name in bundle"));
        }
        let len: usize = len.parse().map_err(|_| bad("bad entry length"))?;
        let start = nl + 1;
        let end = start + len;
        if end >= bytes.len() + 1 || bytes.get(end) != Some(&b'\n') {
            return Err(bad("truncated entry"));
        }
        files.insert(name.to_string(), bytes[start..end].to_vec());
        pos = end + 1;
    }
    for (name, content) in &files {
        let dest = root.join(name);
        if !dest.exists() {
            let tmp = root.join(format!(".{name}.tmp"));
            fs::write(&tmp, content)?;
            fs::rename(&tmp, &dest)?;
            Store::open_path(&dest)?;
        } else {
            let tmp = root.join(format!(".{name}.import.tmp"));
            fs::write(&tmp, content)?;
            let incoming = Store::open_path(&tmp)?;
            let (recs, bad_recs) = incoming.all_records()?;
            let _ = fs::remove_file(&tmp);
            let _ = fs::remove_file(tmp.with_extension(INDEX_EXT));
            if let Some((k, r)) = bad_recs.first() {
                return Err(Error::CacheIntegrity { key: k.to_string(), reason: r.clone() });
            }
            let mut existing = Store::open_path(&dest)?;
            if existing.header != incoming.header {
                return Err(bad("bundle store header conflicts with existing store"));
            }
            existing.append(&recs)?;
        }
    }
    Ok(files.len())
}

/// Outcome of [`verify`].
#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub stores: usize,
    pub records: usize,
    pub sampled: usize,
    /// Keys whose record failed the checksum or could not be parsed.
    pub integrity_failures: Vec<(String, String)>,
    /// Keys whose midpoint disagrees with an independent recomputation.
    pub value_failures: Vec<(String, String)>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.integrity_failures.is_empty() && self.value_failures.is_empty()
    }
}

/// Check every checksum and recompute a deterministic sample (a `fraction`
/// of the records, at least one per store) with the closed-form element at
/// 20 digits, comparing against the stored midpoints.
pub fn verify(cache: &ElementCache, fraction: f64) -> Result<VerifyReport, Error> {
    use crate::mpcore::{Mag, Real};
    let mut rep = VerifyReport::default();
    for store in cache.stores()? {
        rep.stores += 1;
        let (recs, bad) = store.all_records()?;
        rep.records += recs.len() + bad.len();
        rep.integrity_failures.extend(bad.into_iter().map(|(k, r)| (k.to_string(), r)));
        let h = &store.header;
        let grid: TimeGrid = h.grid.parse()?;
        let a: Real = h.a.parse()?;
        let delta: Real = h.delta.parse()?;
        let step = ((1.0 / fraction.clamp(1e-9, 1.0)).round() as usize).max(1);
        let picked: Vec<&CacheRecord> = recs
            .iter()
            .enumerate()
            .filter(|(i, _)| i % step == 0)
            .map(|(_, r)| r)
            .collect();
        for r in picked {
            rep.sampled += 1;
            let spec = BasisSpec { a: a.clone(), delta: delta.clone(), n: r.key.m.max(r.key.n) };
            let v = super::element::element_to_radius(
                r.key.m,
                r.key.n,
                &grid,
                &spec,
                20,
                &Mag::pow10_neg(15),
                16,
            )?;
            let (sr, si) = (r.re.parse::<f64>(), r.im.parse::<f64>());
            let (vr, vi) = v.to_c64();
            let tol = 1e-13 + 10f64.powi(r.rad_exp.clamp(-300, 300) as i32);
            match (sr, si) {
                (Ok(sr), Ok(si)) if (sr - vr).abs() <= tol && (si - vi).abs() <= tol => {}
                _ => rep.value_failures.push((
                    r.key.to_string(),
                    format!("stored ({}, {}) vs recomputed ({vr:e}, {vi:e})", r.re, r.im),
                )),
            }
        }
    }
    Ok(rep)
}
