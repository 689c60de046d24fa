//! CSV helpers shared by every file format in the crate.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits (round-trips every `f64`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory table with a header row.
#[derive(Clone, Debug)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        let index = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.clone(), i))
            .collect();
        Ok(Self {
            path: path.to_owned(),
            header,
            rows,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has(&self, column: &str) -> bool {
        self.index.contains_key(column)
    }

    pub fn col(&self, column: &str) -> Result<usize> {
        self.index
            .get(column)
            .copied()
            .ok_or_else(|| Error::parse(&self.path, format!("missing column `{column}`")))
    }

    pub fn str_at(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        s.trim().parse().map_err(|_| {
            Error::parse(
                &self.path,
                format!("row {}: column `{}` is not a number: {s:?}", row + 1, self.header[col]),
            )
        })
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let s = &self.rows[row][col];
        s.trim().parse().map_err(|_| {
            Error::parse(
                &self.path,
                format!("row {}: column `{}` is not an index: {s:?}", row + 1, self.header[col]),
            )
        })
    }

    pub fn f64_column(&self, column: &str) -> Result<Vec<f64>> {
        let c = self.col(column)?;
        (0..self.len()).map(|r| self.f64_at(r, c)).collect()
    }

    /// Columns named `{prefix}1, {prefix}2, ...` (or `{prefix}0, ...`) in order.
    pub fn numbered_columns(&self, prefix: &str) -> Vec<usize> {
        let mut found: Vec<(usize, usize)> = self
            .header
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.strip_prefix(prefix)
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .map(|k| (k, i))
            })
            .collect();
        found.sort();
        found.into_iter().map(|(_, i)| i).collect()
    }
}

/// Writes a header and rows to `path`, creating parent directories.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let bytes = table_bytes(header, rows);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn table_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17);
        }
    }
}
