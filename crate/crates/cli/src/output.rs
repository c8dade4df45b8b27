//! CSV files with a comment header: schema version, resolved config, then
//! optional notes. Bodies carry no timestamps, so identical configs give
//! identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn schema(name: &str) -> String {
    format!("quasiloc.{name}/{SCHEMA_VERSION}")
}

/// Shortest round-trip representation, in exponent form for very small or
/// very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub struct Table {
    pub name: &'static str,
    pub notes: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: Vec<String>) -> Self {
        Table { name, notes: Vec::new(), header, rows: Vec::new() }
    }

    pub fn write(&self, dir: &Path, config_echo: &str) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join(format!("{}.csv", self.name)))?);
        writeln!(out, "# schema: {}", schema(self.name))?;
        writeln!(out, "# config: {config_echo}")?;
        for note in &self.notes {
            writeln!(out, "# {note}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}
