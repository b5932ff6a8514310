//! Artifact output: atomic writes, CSV tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::spectral::SpectralSpace;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().ok_or_else(|| Error::invalid("path", "has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A numeric table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format!("{x:e}"))).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    /// Reads a CSV of numbers; an empty file gives an empty table.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.iter().all(|b| b.is_ascii_whitespace()) {
            return Ok(Table::default());
        }
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Schema(format!("bad number {x:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(e.to_string())
}

/// `t, |v|_H, |v|_V, |v|_D(L)` per sample.
pub fn trajectory_table(space: &SpectralSpace, traj: &Trajectory) -> Table {
    let mut t = Table::new(&["t", "|v|_H", "|v|_V", "|v|_D(L)"]);
    for (i, v) in traj.states.iter().enumerate() {
        let n = space.norms(v);
        t.push(vec![traj.time(i), n.h, n.v, n.dl]);
    }
    t
}

/// `t, |v|_H, |v|_V, bound` with `bound = sqrt(kappa e^{-lambda t}) |v0|_H`.
pub fn decay_table(space: &SpectralSpace, traj: &Trajectory, lambda: f64, kappa: f64) -> Table {
    let mut t = Table::new(&["t", "|v|_H", "|v|_V", "bound"]);
    let h0 = traj.states.first().map_or(0.0, |v| v.norm());
    for (i, v) in traj.states.iter().enumerate() {
        let n = space.norms(v);
        let time = traj.time(i);
        t.push(vec![time, n.h, n.v, (kappa * (-lambda * (time - traj.t0)).exp()).sqrt() * h0]);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_sha256: String,
    pub versions: Versions,
    pub seed: u64,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub failed_checks: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub nsstab: String,
    pub config_schema: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            nsstab: env!("CARGO_PKG_VERSION").to_string(),
            config_schema: 1,
        }
    }
}

/// Collects artifact paths relative to the output directory.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)?;
        self.record(name);
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        table.write(&self.path(name))?;
        self.record(name);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(name), text.as_bytes())?;
        self.record(name);
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}
