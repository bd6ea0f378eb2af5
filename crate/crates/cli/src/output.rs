//! Output layout `<output_dir>/<command>/<hash>/<stem>-<hash>.<ext>`.
//!
//! Data files are written atomically and contain no timestamps; wall-clock
//! times go to the append-only log next to them.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use catapult_core::io::write_atomic;
use serde::Serialize;

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
}

impl OutputDir {
    pub fn new(root: &Path, command: &str, hash: &str) -> Self {
        OutputDir {
            dir: root.join(command).join(hash),
            hash: hash.to_string(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}.{ext}", self.hash))
    }

    pub fn write(&self, stem: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(stem, ext);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(stem, "json", text.as_bytes())
    }

    pub fn log(&self, msg: &str) -> Result<()> {
        let path = self.path("log", "txt");
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        let t = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        writeln!(f, "[{}.{:03}] {msg}", t.as_secs(), t.subsec_millis())
            .with_context(|| format!("writing {}", path.display()))
    }
}
