//! Output files that are removed again unless the command completes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record `path` as an output before something else writes it.
    pub fn track(&mut self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        self.track(path)?;
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    /// Keep every output.
    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("sub/a.txt");
        {
            let mut out = Outputs::new();
            out.write(&a, "x").unwrap();
            assert!(a.exists());
        }
        assert!(!a.exists());
        let mut out = Outputs::new();
        out.write(&a, "x").unwrap();
        out.commit();
        assert!(a.exists());
    }
}
