//! CSV and JSON emission. Numbers are written with 17 significant digits so
//! every value reads back to the same `f64`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes rows of optional numbers; `None` leaves the cell empty.
pub struct CsvOut {
    path: std::path::PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|e| to_cli(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer, width: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.width);
        self.writer.write_record(values.iter().map(|v| fmt_num(*v))).map_err(|e| to_cli(&self.path, e))
    }

    pub fn row_opt(&mut self, values: &[Option<f64>]) -> Result<()> {
        debug_assert_eq!(values.len(), self.width);
        self.writer
            .write_record(values.iter().map(|v| v.map(fmt_num).unwrap_or_default()))
            .map_err(|e| to_cli(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn to_cli(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// One-column-per-series table written in a single call.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut out = CsvOut::create(path, header)?;
    for i in 0..rows {
        let row: Vec<Option<f64>> = columns.iter().map(|c| c.get(i).copied()).collect();
        out.row_opt(&row)?;
    }
    out.finish()
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("metrics serialise");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
