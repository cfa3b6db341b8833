//! Output directory handling: an exclusive lock for the duration of a
//! command and a sidecar log, the only place timestamps are written.

use std::fs::{File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;

pub const LOCK_FILE: &str = ".ppr.lock";
pub const LOG_FILE: &str = "ppr.log";

#[derive(Debug, thiserror::Error)]
#[error("output directory {0} is locked by another ppr process")]
pub struct Locked(pub String);

/// A locked output directory. The lock is released on drop.
pub struct OutDir {
    root: PathBuf,
    _lock: File,
}

impl OutDir {
    pub fn open(root: &Path) -> anyhow::Result<OutDir> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let path = root.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(Locked(root.display().to_string()).into()),
            Err(TryLockError::Error(e)) => return Err(e).with_context(|| format!("locking {}", path.display())),
        }
        Ok(OutDir {
            root: root.to_path_buf(),
            _lock: lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text)
    }

    /// Appends a timestamped line to the sidecar log.
    pub fn log(&self, line: &str) {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(self.path(LOG_FILE)) {
            let _ = writeln!(f, "{secs} {line}");
        }
    }
}
