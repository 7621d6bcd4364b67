//! CSV plumbing shared by the dataset readers: header inspection and typed
//! field parsing with file/line/column error locations.

use std::fs::File;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord};

use crate::error::{Error, Result};

pub(crate) struct CsvTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<(u64, StringRecord)>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut reader = ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Self {
            path: path.to_owned(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Indices of the consecutive columns `{prefix}1, {prefix}2, ...`.
    pub fn numbered_columns(&self, prefix: &str) -> Vec<usize> {
        let mut cols = Vec::new();
        for i in 1.. {
            match self.column(&format!("{prefix}{i}")) {
                Some(c) => cols.push(c),
                None => break,
            }
        }
        cols
    }

    pub fn error(&self, line: u64, column: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            line,
            column: column + 1,
            message: message.into(),
        }
    }

    pub fn field<'r>(&self, line: u64, record: &'r StringRecord, column: usize) -> Result<&'r str> {
        record
            .get(column)
            .ok_or_else(|| self.error(line, column, "missing field"))
    }

    pub fn parse_f64(&self, line: u64, record: &StringRecord, column: usize) -> Result<f64> {
        let raw = self.field(line, record, column)?;
        raw.parse::<f64>().map_err(|_| {
            self.error(
                line,
                column,
                format!("`{raw}` in column `{}` is not a number", self.header[column]),
            )
        })
    }

    pub fn parse_usize(&self, line: u64, record: &StringRecord, column: usize) -> Result<usize> {
        let raw = self.field(line, record, column)?;
        raw.parse::<usize>().map_err(|_| {
            self.error(
                line,
                column,
                format!(
                    "`{raw}` in column `{}` is not a nonnegative integer",
                    self.header[column]
                ),
            )
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => (pos.as_ref().map_or(0, |p| p.line()), 1),
        _ => (e.position().map_or(0, |p| p.line()), 1),
    };
    Error::Format {
        path: path.to_owned(),
        line,
        column,
        message: e.to_string(),
    }
}

pub(crate) fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}
