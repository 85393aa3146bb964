//! Output directory: CSV tables, optional plot data, snapshots and the manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use bft_core::field::fmt17;
use bft_core::FieldState;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{Failure, Global};

/// A named pass/fail assertion with a one-line detail.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}

/// Reals are written with 17 significant digits.
pub fn real(x: f64) -> String {
    fmt17(x)
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render(&self, sep: &str, comment: &str) -> String {
        let mut s = format!("{comment}{}\n", self.header.join(sep));
        for row in &self.rows {
            s.push_str(&row.join(sep));
            s.push('\n');
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One invocation's outputs. `settings` holds everything the outputs depend
/// on; its hash identifies the run.
pub struct Run {
    dir: PathBuf,
    plotdata: bool,
    command: &'static str,
    settings: Value,
    seeds: Vec<u64>,
    files: Vec<String>,
}

impl Run {
    pub fn new(global: &Global, command: &'static str, settings: Value) -> Result<Self, Failure> {
        fs::create_dir_all(&global.out)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", global.out.display())))?;
        Ok(Self {
            dir: global.out.clone(),
            plotdata: global.plotdata,
            command,
            settings,
            seeds: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<stem>.csv`, plus `<stem>.dat` under `--plotdata`.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), Failure> {
        self.write(&format!("{stem}.csv"), table.render(",", "").as_bytes())?;
        if self.plotdata {
            self.write(&format!("{stem}.dat"), table.render(" ", "# ").as_bytes())?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self, name: &str, field: &FieldState) -> Result<(), Failure> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        field.write_bft1(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` and hands the checks back.
    pub fn finish(self, checks: Vec<Check>) -> Result<Vec<Check>, Failure> {
        let canonical = serde_json::to_vec(&self.settings).map_err(|e| Failure::Runtime(e.to_string()))?;
        let manifest = json!({
            "command": self.command,
            "config_sha256": sha256_hex(&canonical),
            "settings": self.settings,
            "versions": { "bft": env!("CARGO_PKG_VERSION"), "bft_core": bft_core::VERSION },
            "seeds": self.seeds,
            "outputs": self.files,
            "checks": checks
                .iter()
                .map(|c| json!({ "name": c.name, "pass": c.pass, "detail": c.detail }))
                .collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(checks)
    }
}
