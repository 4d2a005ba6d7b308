use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BUNDLE_FILE: &str = "bundle.mcpl";

/// Output directory of one invocation. Creation fails if the directory
/// already exists, so runs never overwrite each other.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::create_dir(&path).map_err(|e| Error::io(&path, e))?;
        for sub in ["checkpoints", "masks"] {
            let d = path.join(sub);
            std::fs::create_dir(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(RunDir { path })
    }

    /// A fresh directory under `root` named `{label}-{n}` with the
    /// smallest free `n`.
    pub fn create_unique(root: impl AsRef<Path>, label: &str) -> Result<Self> {
        let root = root.as_ref();
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for n in 1.. {
            let candidate = root.join(format!("{label}-{n:03}"));
            match std::fs::create_dir(&candidate) {
                Ok(()) => {
                    std::fs::remove_dir(&candidate).map_err(|e| Error::io(&candidate, e))?;
                    return Self::create(candidate);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(candidate, e)),
            }
        }
        unreachable!("unbounded search")
    }

    /// Reopens an existing run directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.join(CONFIG_FILE).is_file() {
            return Err(Error::Load { path: path.clone(), reason: "not a run directory (no config.json)".into() });
        }
        Ok(RunDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.path.join("checkpoints")
    }

    pub fn masks(&self) -> PathBuf {
        self.path.join("masks")
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(&p, e))
    }

    pub fn metrics_writer(&self) -> Result<JsonLines> {
        let p = self.file(METRICS_FILE);
        let f = OpenOptions::new().create(true).append(true).open(&p).map_err(|e| Error::io(&p, e))?;
        Ok(JsonLines { path: p, out: BufWriter::new(f) })
    }
}

pub struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn push<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_overwrites() {
        let root = tempfile::tempdir().unwrap();
        let a = RunDir::create(root.path().join("r")).unwrap();
        assert!(a.checkpoints().is_dir() && a.masks().is_dir());
        assert!(RunDir::create(root.path().join("r")).is_err());
        let u1 = RunDir::create_unique(root.path(), "learn").unwrap();
        let u2 = RunDir::create_unique(root.path(), "learn").unwrap();
        assert_ne!(u1.path, u2.path);
    }
}
