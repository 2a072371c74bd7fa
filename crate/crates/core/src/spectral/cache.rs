//! On-disk cache of eigendecompositions.
//!
//! Layout: `b"WEYL"`, format version (u32 LE), metadata length (u32 LE),
//! metadata JSON, then little-endian f64: raw eigenvalues followed by the
//! coefficient matrix in row-major order. The file name is the SHA-256 of the
//! metadata JSON. Writes go to a temporary file that is renamed into place.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{eigensolve, Hamiltonian, ShiftPolicy, SpectralData, SpectralOptions};
use crate::error::{Error, Result};
use crate::lattice::LatticeBasis;

pub const MAGIC: &[u8; 4] = b"WEYL";
pub const VERSION: u32 = 1;
pub const ENV_VAR: &str = "WEYLLAB_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMetadata {
    pub dim: usize,
    pub cutoff: f64,
    pub basis_size: usize,
    pub center: Vec<f64>,
    /// Fingerprint of the potential and its quadrature parameters.
    pub potential: String,
    pub shift_policy: ShiftPolicy,
}

impl CacheMetadata {
    pub fn for_data(data: &SpectralData, policy: ShiftPolicy) -> Self {
        Self {
            dim: data.dim(),
            cutoff: data.basis().cutoff(),
            basis_size: data.len(),
            center: data.center().to_vec(),
            potential: data.fingerprint().to_string(),
            shift_policy: policy,
        }
    }

    pub fn for_hamiltonian(h: &Hamiltonian, policy: ShiftPolicy) -> Self {
        Self {
            dim: h.basis().dim(),
            cutoff: h.basis().cutoff(),
            basis_size: h.size(),
            center: h.center().to_vec(),
            potential: h.fingerprint().to_string(),
            shift_policy: policy,
        }
    }

    pub fn key(&self) -> String {
        let json = serde_json::to_vec(self).expect("metadata serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Cache directory: explicit setting first, then `WEYLLAB_CACHE_DIR`.
pub fn cache_dir(configured: Option<&Path>) -> Option<PathBuf> {
    configured
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ENV_VAR).map(PathBuf::from))
}

pub fn entry_path(dir: &Path, meta: &CacheMetadata) -> PathBuf {
    dir.join(format!("{}.weyl", meta.key()))
}

#[derive(Serialize, Deserialize)]
struct StoredMetadata {
    #[serde(flatten)]
    key: CacheMetadata,
    shift: f64,
}

pub fn save(dir: &Path, meta: &CacheMetadata, data: &SpectralData) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = entry_path(dir, meta);
    let stored = StoredMetadata {
        key: meta.clone(),
        shift: data.shift(),
    };
    let json = serde_json::to_vec(&stored)?;
    let n = data.len();
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * n * (n + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in data.raw_eigenvalues() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..n {
        for k in 0..n {
            buf.extend_from_slice(&data.column(k)[i].to_le_bytes());
        }
    }
    let mut tmp = tempfile_in(dir)?;
    tmp.1.write_all(&buf)?;
    tmp.1.sync_all()?;
    drop(tmp.1);
    fs::rename(&tmp.0, &path)?;
    Ok(path)
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, fs::File)> {
    for attempt in 0..1000u32 {
        let name = format!(".tmp-{}-{}-{attempt}", std::process::id(), nanos());
        let path = dir.join(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::CacheFormat("could not create a temporary file".into()))
}

fn nanos() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0)
}

/// `Ok(None)` when no entry exists; `Err(CacheFormat)` for a corrupt entry,
/// which callers treat as a miss after warning.
pub fn load(
    dir: &Path,
    meta: &CacheMetadata,
    basis: Arc<LatticeBasis>,
    opts: &SpectralOptions,
) -> Result<Option<SpectralData>> {
    let path = entry_path(dir, meta);
    let mut file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let bad = |why: &str| Error::CacheFormat(format!("{}: {why}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated metadata"))?;
    let stored: StoredMetadata = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    if stored.key != *meta || basis.len() != meta.basis_size {
        return Err(bad("metadata does not match the request"));
    }
    let n = meta.basis_size;
    let floats = &bytes[12 + len..];
    if floats.len() != 8 * n * (n + 1) {
        return Err(bad("payload has the wrong length"));
    }
    let read = |i: usize| f64::from_le_bytes(floats[8 * i..8 * i + 8].try_into().unwrap());
    let raw: Vec<f64> = (0..n).map(read).collect();
    let mut coeffs = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            coeffs[k * n + i] = read(n + i * n + k);
        }
    }
    let opts = SpectralOptions {
        shift: meta.shift_policy,
        ..*opts
    };
    let data = SpectralData::from_parts(basis, meta.center.clone(), raw, coeffs, &opts, meta.potential.clone())?;
    if data.shift().to_bits() != stored.shift.to_bits() {
        return Err(bad("stored shift disagrees with the recomputed one"));
    }
    Ok(Some(data))
}

#[derive(Debug)]
pub enum CacheOutcome {
    Disabled,
    Hit(PathBuf),
    /// Solved and stored; the string is a warning if a corrupt entry was replaced
    /// or the store itself failed.
    Miss(PathBuf, Option<String>),
}

/// Eigensolve through the cache in `dir` (no caching when `None`). Corrupt
/// entries are reported, recomputed and overwritten.
pub fn solve_cached(h: &Hamiltonian, opts: &SpectralOptions, dir: Option<&Path>) -> Result<(SpectralData, CacheOutcome)> {
    let Some(dir) = dir else {
        return Ok((eigensolve(h, opts)?, CacheOutcome::Disabled));
    };
    let meta = CacheMetadata::for_hamiltonian(h, opts.shift);
    let mut warning = None;
    match load(dir, &meta, h.basis().clone(), opts) {
        Ok(Some(data)) => return Ok((data, CacheOutcome::Hit(entry_path(dir, &meta)))),
        Ok(None) => {}
        Err(e @ Error::CacheFormat(_)) => warning = Some(format!("ignoring cache entry: {e}")),
        Err(e) => return Err(e),
    }
    let data = eigensolve(h, opts)?;
    let path = match save(dir, &meta, &data) {
        Ok(p) => p,
        Err(e) => {
            warning = Some(format!("could not store cache entry: {e}"));
            entry_path(dir, &meta)
        }
    };
    Ok((data, CacheOutcome::Miss(path, warning)))
}
