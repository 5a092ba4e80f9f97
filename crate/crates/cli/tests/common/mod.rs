//! Helpers shared by the CLI test targets; each target uses a subset.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    pub dir: PathBuf,
}

impl Outcome {
    pub fn file(&self, name: &str) -> String {
        std::fs::read_to_string(self.dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}\nstderr: {}", self.stderr))
    }

    /// All CSV files by name.
    pub fn tables(&self) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        if let Ok(entries) = std::fs::read_dir(&self.dir) {
            for e in entries.flatten() {
                out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
            }
        }
        out
    }

    /// Value column of a `(quantity, value, ...)` table.
    pub fn quantity(&self, file: &str, name: &str) -> String {
        let text = self.file(file);
        let line = text.lines().find(|l| l.split(',').next() == Some(name)).unwrap_or_else(|| panic!("{name} missing from {file}"));
        line.split(',').nth(1).unwrap().to_string()
    }
}

/// Runs `swave <command>` on `toml` with the output directory pointed inside `root`.
pub fn swave(root: &Path, label: &str, command: &str, toml: &str, workers: Option<usize>) -> Outcome {
    let dir = root.join(label);
    let config = root.join(format!("{label}.toml"));
    let key = format!("dir = {:?}", dir.to_str().unwrap());
    let text = if toml.contains("[output]") { toml.replace("[output]", &format!("[output]\n{key}")) } else { format!("{toml}\n[output]\n{key}\n") };
    std::fs::write(&config, text).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swave"));
    cmd.arg(command).arg(&config);
    match workers {
        Some(n) => cmd.env("SWAVE_WORKERS", n.to_string()),
        None => cmd.env_remove("SWAVE_WORKERS"),
    };
    let out = cmd.output().expect("binary runs");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        dir,
    }
}

/// Small but complete configs, one per command.
pub const SMALL: [(&str, &str); 5] = [
    ("geometry", ""),
    ("carleman-verify", "[discretization]\nnx = [40]\n[carleman]\nlambdas = [1.0, 10.0]\nmus = [1.0, 2.0]\n[mc]\npaths = 200\nseed = 5"),
    ("observability", "[discretization]\nnx = [40]\n[control]\nhorizons = [1.0, 2.5]"),
    ("control", "[discretization]\nnx = [50]\n[mc]\npaths = 50\n[control]\ndump_controls = true\n[output]\nsnapshot_stride = 25"),
    ("energy-check", "[coefficients]\na1 = 5\n[discretization]\nnx = [40]"),
];

