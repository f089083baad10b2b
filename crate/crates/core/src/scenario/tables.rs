use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::Result;

/// Flat CSV table for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Table { name: name.to_string(), header, rows: Vec::new() }
    }

    /// Append a row of floats in round-trip notation.
    pub fn push_numbers(&mut self, values: impl IntoIterator<Item = f64>) {
        self.rows.push(values.into_iter().map(|v| format!("{v:?}")).collect());
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Write each check's tables as `NN_<op>_<table>.csv` under `dir`.
pub fn emit_tables(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for check in &report.checks {
        for t in &check.tables {
            let path = dir.join(format!("{:02}_{}_{}.csv", check.index, check.op.name(), t.name));
            t.write_csv(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}
