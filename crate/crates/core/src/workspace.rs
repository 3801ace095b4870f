//! On-disk layout: `datasets/`, `runs/<run_id>/`, `reports/`.

use std::env;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WORKSPACE_ENV: &str = "POSLAB_WORKSPACE";
pub const DEFAULT_ROOT: &str = "poslab-workspace";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    /// `explicit` if given, else `$POSLAB_WORKSPACE`, else `./poslab-workspace`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => Workspace::new(p),
            None => Workspace::new(env::var_os(WORKSPACE_ENV).map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from)),
        }
    }

    pub fn datasets_dir(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    /// A bare name refers to a directory under `datasets/`; anything with a
    /// path separator is taken as is.
    pub fn dataset_path(&self, reference: &str) -> PathBuf {
        let p = Path::new(reference);
        if p.is_absolute() || p.components().count() > 1 {
            p.to_path_buf()
        } else {
            self.datasets_dir().join(p)
        }
    }

    pub fn ensure(&self) -> Result<()> {
        for d in [self.datasets_dir(), self.runs_dir(), self.reports_dir()] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(())
    }

    /// Exclusive lock over the runs directory, released on drop. A lock left
    /// by a process that no longer exists is taken over.
    pub fn lock(&self) -> Result<WorkspaceLock> {
        self.ensure()?;
        let path = self.runs_dir().join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => {
                    let _ = fs::write(&path, std::process::id().to_string());
                    return Ok(WorkspaceLock { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    if !owner_is_gone(&path) {
                        break;
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Config(format!(
            "workspace is locked by another sweep ({}); remove the file if no sweep is running",
            path.display()
        )))
    }
}

fn owner_is_gone(lock: &Path) -> bool {
    let proc_root = Path::new("/proc/self");
    if !proc_root.exists() {
        return false;
    }
    match fs::read_to_string(lock).ok().and_then(|s| s.trim().parse::<u32>().ok()) {
        Some(pid) => !Path::new(&format!("/proc/{pid}")).exists(),
        None => false,
    }
}

#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// First 16 hex digits of SHA-256 over the config bytes and the run key.
pub fn run_id(config_bytes: &[u8], run_key: &str) -> String {
    let mut h = Sha256::new();
    h.update(config_bytes);
    h.update([0u8]);
    h.update(run_key.as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}
