//! In-memory CSV tables and their on-disk form.
//!
//! Every table is UTF-8, comma separated, LF terminated, with a header row;
//! floats carry 17 significant digits so they round-trip exactly.

use std::io;
use std::path::{Path, PathBuf};

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A named CSV table. `name` is a path relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Moves the table under `dir/`.
    pub fn nested(mut self, dir: &str) -> Self {
        self.name = format!("{dir}/{}", self.name);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        // Writing into a Vec cannot fail.
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Writes the table below `dir`, creating parent directories.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(&self.name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, self.to_bytes())?;
        Ok(path)
    }
}
