//! Per-run artifacts: diagnostics CSV, snapshots and the summary file.

use std::fs;
use std::path::{Path, PathBuf};

use polaris_core::diagnostics::{DiagnosticsRow, DiagnosticsSink};
use polaris_core::io::{write_snapshot, DiagnosticsCsvWriter};
use polaris_core::{Error, Mesh, Parameters, Result, State};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const FINAL_SNAPSHOT: &str = "snapshot_final.txt";

pub fn snapshot_name(index: usize) -> String {
    format!("snapshot_{index:04}.txt")
}

/// Streams rows to CSV and writes a snapshot whenever `t` passes the next
/// multiple of `every` (the initial state is always written).
pub struct RunSink<'a> {
    mesh: &'a Mesh,
    params: &'a Parameters,
    dir: PathBuf,
    csv: Option<DiagnosticsCsvWriter>,
    every: f64,
    next_t: f64,
    index: usize,
    pub rows: Vec<DiagnosticsRow>,
    error: Option<Error>,
}

impl<'a> RunSink<'a> {
    pub fn new(mesh: &'a Mesh, params: &'a Parameters, dir: &Path, p_values: &[f64], every: f64) -> Result<Self> {
        Ok(RunSink {
            mesh,
            params,
            dir: dir.to_path_buf(),
            csv: Some(DiagnosticsCsvWriter::create(&dir.join(DIAGNOSTICS_FILE), p_values)?),
            every,
            next_t: 0.0,
            index: 0,
            rows: Vec::new(),
            error: None,
        })
    }

    fn try_record(&mut self, row: &DiagnosticsRow, state: &State) -> Result<()> {
        if let Some(csv) = self.csv.as_mut() {
            csv.write_row(row)?;
        }
        if row.t >= self.next_t {
            write_snapshot(state, self.mesh, self.params, &self.dir.join(snapshot_name(self.index)))?;
            self.index += 1;
            self.next_t = if self.every > 0.0 {
                (row.t / self.every).floor() * self.every + self.every
            } else {
                f64::INFINITY
            };
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<DiagnosticsRow>> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some(csv) = self.csv.take() {
            csv.finish()?;
        }
        Ok(self.rows)
    }
}

impl DiagnosticsSink for RunSink<'_> {
    fn record(&mut self, row: &DiagnosticsRow, state: &State) {
        self.rows.push(row.clone());
        if self.error.is_none() {
            if let Err(e) = self.try_record(row, state) {
                self.error = Some(e);
            }
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}
