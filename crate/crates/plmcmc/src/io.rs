//! CSV tables with missing cells.
//!
//! Input files have a header row. An empty cell or the token `NaN` marks a
//! missing entry. Output tables write missing entries as empty cells, and
//! masks are written as a parallel table of `0`/`1` (1 = missing).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use plmcmc_core::data::Dataset;

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Dataset,
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "NaN" {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Err(format!("non-finite value `{cell}`")),
        Err(_) => Err(format!("not a number: `{cell}`")),
    }
}

pub fn read_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let parse_err = |line: u64, column: usize, message: String| AppError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(parse_err(1, 0, "missing header row".into()));
    }
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != columns.len() {
            return Err(parse_err(
                line,
                record.len().min(columns.len()) + 1,
                format!("expected {} fields, found {}", columns.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell).map_err(|m| parse_err(line, j + 1, m))?;
            values.push(v.unwrap_or(0.0));
            missing.push(v.is_none());
        }
    }
    let data = Dataset::new(columns.len(), values, missing)?;
    Ok(Table { columns, data })
}

pub fn load_csv(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_csv(std::io::BufReader::new(file), path)
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    File::create(path).map(std::io::BufWriter::new).map_err(|e| AppError::io(path, e))
}

/// Write `rows` of already formatted cells under `header`.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create(path)?;
    let io = |e| AppError::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Write a table, leaving missing entries empty.
pub fn write_table(path: &Path, columns: &[String], data: &Dataset) -> Result<()> {
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..data.rows()).map(|i| {
        data.row(i)
            .iter()
            .zip(data.row_missing(i))
            .map(|(v, &m)| if m { String::new() } else { v.to_string() })
            .collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

/// Write every cell of `data`, imputed ones included.
pub fn write_filled(path: &Path, columns: &[String], data: &Dataset) -> Result<()> {
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..data.rows()).map(|i| data.row(i).iter().map(f64::to_string).collect::<Vec<_>>());
    write_rows(path, &header, rows)
}

/// Write the missingness mask as 0/1 cells.
pub fn write_mask(path: &Path, columns: &[String], data: &Dataset) -> Result<()> {
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..data.rows()).map(|i| {
        data.row_missing(i)
            .iter()
            .map(|&m| if m { "1" } else { "0" }.to_string())
            .collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| AppError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| AppError::Json {
        path: path.to_path_buf(),
        source,
    })
}
