//! Refuses to overwrite outputs that were written under another configuration.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use cavity_core::io::recorded_config_hash;
use cavity_core::{Error, Result};

pub struct OutputGuard<'a> {
    dir: &'a Path,
    hash: &'a str,
    force: bool,
}

impl<'a> OutputGuard<'a> {
    pub fn new(dir: &'a Path, hash: &'a str, force: bool) -> Self {
        OutputGuard { dir, hash, force }
    }

    fn recorded(path: &Path) -> Result<Option<String>> {
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))
                .map_err(|e| Error::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            })?;
            return Ok(v
                .get("config_hash")
                .and_then(|h| h.as_str())
                .map(str::to_string));
        }
        recorded_config_hash(BufReader::new(File::open(path)?))
    }

    /// Checks every existing file in `paths` before anything is written.
    pub fn check_all(&self, paths: &[&Path]) -> Result<()> {
        if self.force || !self.dir.exists() {
            return Ok(());
        }
        for p in paths {
            if !p.exists() {
                continue;
            }
            let found = Self::recorded(p)?;
            if found.as_deref() != Some(self.hash) {
                return Err(Error::Validation(format!(
                    "{} was written with config hash {}, current config hash is {}; use --force to overwrite",
                    p.display(),
                    found.as_deref().unwrap_or("(none)"),
                    self.hash
                )));
            }
        }
        Ok(())
    }
}
