//! CSV ingestion and writing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use murphy_core::{Curve, Error as CoreError};

/// Numeric columns read from a CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    columns: BTreeMap<String, Vec<f64>>,
    rows: usize,
}

impl Table {
    /// Reads only the `wanted` columns; other columns may hold anything.
    pub fn read(path: &Path, wanted: &[String]) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = rdr.headers().with_context(|| format!("{}: cannot read header", path.display()))?.clone();
        let mut index = Vec::with_capacity(wanted.len());
        for name in wanted {
            let i = header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| anyhow!("{}: no column named `{name}`", path.display()))?;
            index.push((name.clone(), i));
        }
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); index.len()];
        for (k, record) in rdr.records().enumerate() {
            // header is line 1
            let line = k + 2;
            let record = record.with_context(|| format!("{}: line {line}", path.display()))?;
            for (col, (name, i)) in data.iter_mut().zip(&index) {
                let field = record.get(*i).unwrap_or("").trim();
                if field.is_empty() {
                    bail!("{}: line {line}: missing value in column `{name}`", path.display());
                }
                let v: f64 = field
                    .parse()
                    .map_err(|_| anyhow!("{}: line {line}: `{field}` in column `{name}` is not a number", path.display()))?;
                col.push(v);
            }
        }
        let rows = data.first().map_or(0, Vec::len);
        if rows == 0 {
            bail!("{}: no data rows", path.display());
        }
        Ok(Self { columns: index.into_iter().map(|(n, _)| n).zip(data).collect(), rows })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| anyhow!("no column named `{name}`"))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Turns row indices in core validation errors into file line numbers.
pub fn located(err: CoreError, path: &Path) -> anyhow::Error {
    match err {
        CoreError::NegativeValue { column, row, value } => {
            anyhow!("{}: line {}: negative value {value} in column `{column}`", path.display(), row + 2)
        }
        CoreError::NonFinite { column, row } => {
            anyhow!("{}: line {}: non-finite value in column `{column}`", path.display(), row + 2)
        }
        other => other.into(),
    }
}

pub fn write_columns(path: &Path, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(names)?;
    let n = columns.first().map_or(0, |c| c.len());
    let mut row = Vec::with_capacity(columns.len());
    for i in 0..n {
        row.clear();
        row.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(dir: &Path, name: &str, curve: &Curve<f64>) -> Result<String> {
    let file = format!("{name}.csv");
    let path = dir.join(&file);
    let mut w = std::io::BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    curve.write_records(&mut w)?;
    w.flush()?;
    Ok(file)
}
