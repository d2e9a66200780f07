//! Advisory lock file that keeps `ingest` off a cache a service is serving.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const LOCK_FILE: &str = ".scenemem.lock";

#[derive(Debug, thiserror::Error)]
pub enum LockError {
    #[error("{0} is locked by another scenemem process (delete {1} if it is stale)", .path.display(), .lock.display())]
    Held { path: PathBuf, lock: PathBuf },
    #[error("{path}: {source}", path = .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Removes the lock file on drop.
#[derive(Debug)]
pub struct CacheLock {
    path: PathBuf,
}

impl CacheLock {
    pub fn acquire(cache_dir: &Path) -> Result<Self, LockError> {
        std::fs::create_dir_all(cache_dir).map_err(|source| LockError::Io { path: cache_dir.into(), source })?;
        let path = cache_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(CacheLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(LockError::Held { path: cache_dir.into(), lock: path })
            }
            Err(source) => Err(LockError::Io { path, source }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
