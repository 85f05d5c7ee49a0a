//! Output directory handling: the lock file, JSON/CSV artifacts, the
//! manifest and the lattice-ball cache.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use hyperwave::fuchsian::{CoverDescriptor, Perm, SurfaceFile};
use hyperwave::hypgeo::Moebius;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, InModule};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

/// An output directory held exclusively for the lifetime of the value.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let lock = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutDir { root: root.to_path_buf() })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Locked { dir: root.to_path_buf() }),
            Err(e) => Err(CliError::io(&lock, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an artifact that must already exist.
    pub fn require(&self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact { path: p })
        }
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, CliError> {
        let p = self.require(name)?;
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::bad_artifact(&p, e))
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::bad_artifact(&self.path(name), e))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::bad_artifact(&self.path(name), e))?;
        self.write_bytes(name, &bytes)
    }

    pub fn read_csv<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, CliError> {
        let p = self.require(name)?;
        let mut r = csv::Reader::from_path(&p).map_err(|e| CliError::bad_artifact(&p, e))?;
        r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::bad_artifact(&p, e))
    }

    /// Rewrite `manifest.json` from the files now in the directory.
    pub fn write_manifest(&self, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let mut names: Vec<String> = fs::read_dir(&self.root)
            .map_err(|e| CliError::io(&self.root, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n != MANIFEST && n != LOCK)
            .collect();
        names.sort();
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            let p = self.path(&name);
            let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            files.push(ManifestEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, path: name });
        }
        let manifest = Manifest {
            config: config.clone(),
            versions: Versions {
                hyperwave: hyperwave::VERSION.into(),
                hyperwave_cli: env!("CARGO_PKG_VERSION").into(),
            },
            files,
        };
        self.write_json(MANIFEST, &manifest)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub hyperwave: String,
    pub hyperwave_cli: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

type Hoods = Vec<(f64, Vec<(Moebius, Perm)>)>;

/// Lattice-ball cache keyed by the hash of the cover file. Active only when
/// `HYPERWAVE_CACHE` names a directory.
pub struct LatticeCache {
    dir: Option<PathBuf>,
}

impl LatticeCache {
    pub fn from_env() -> Self {
        LatticeCache { dir: std::env::var_os("HYPERWAVE_CACHE").map(PathBuf::from) }
    }

    fn file(&self, cover: &CoverDescriptor) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let key = sha256_hex(SurfaceFile::from_cover(cover).to_json().as_bytes());
        Some(dir.join(format!("lattice_{}.json", &key[..16])))
    }

    /// Preload whatever neighbourhoods are cached for `cover`. A corrupt
    /// cache file is ignored.
    pub fn load(&self, cover: &CoverDescriptor) -> Result<(), CliError> {
        let Some(p) = self.file(cover) else { return Ok(()) };
        let Ok(text) = fs::read_to_string(&p) else { return Ok(()) };
        let Ok(hoods) = serde_json::from_str::<Hoods>(&text) else {
            log::warn!("ignoring unreadable cache file {}", p.display());
            return Ok(());
        };
        for (radius, list) in hoods {
            cover.preload_neighborhood(radius, list).in_module("fuchsian")?;
        }
        Ok(())
    }

    pub fn store(&self, cover: &CoverDescriptor) -> Result<(), CliError> {
        let Some(p) = self.file(cover) else { return Ok(()) };
        let dir = p.parent().expect("cache file has a directory");
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let hoods = cover.cached_neighborhoods();
        if hoods.is_empty() {
            return Ok(());
        }
        let tmp = p.with_extension(format!("tmp{}", std::process::id()));
        let mut f = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        serde_json::to_writer(&mut f, &hoods).map_err(|e| CliError::bad_artifact(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &p).map_err(|e| CliError::io(&p, e))
    }
}
