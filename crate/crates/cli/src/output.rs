//! CSV tables with a provenance comment row. Tables are assembled in memory and
//! written once, from the main thread.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use swave_core::config::ExperimentConfig;

/// Config hash and seed stamped on every table.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub hash: String,
    pub seed: u64,
}

impl Stamp {
    /// Hashes everything that can change results; the output directory and the
    /// worker count cannot.
    pub fn of(cfg: &ExperimentConfig) -> Self {
        let mut key = cfg.clone();
        key.output.dir.clear();
        key.mc.workers = None;
        let digest = Sha256::digest(key.canonical().as_bytes());
        let hash = digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        Self { hash, seed: cfg.mc.seed }
    }
}

pub struct Table {
    name: String,
    columns: usize,
    text: String,
}

impl Table {
    pub fn new(name: &str, stamp: &Stamp, header: &[&str]) -> Self {
        let text = format!("# config_hash={}, seed={}\n{}\n", stamp.hash, stamp.seed, header.join(","));
        Self { name: name.into(), columns: header.len(), text }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.columns, "row width of {}", self.name);
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(&self.name);
        std::fs::write(&path, &self.text)?;
        Ok(path)
    }
}

/// Shortest round-trip form; scientific outside `[1e-4, 1e6)` so tiny and huge
/// values stay short.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
