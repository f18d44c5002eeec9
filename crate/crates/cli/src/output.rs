use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// CSV with leading `# key: value` metadata lines.
pub struct CsvTable {
    metadata: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            metadata: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_json<T: Serialize>(&mut self, key: &str, value: &T) -> &mut Self {
        let text = serde_json::to_string(value).expect("metadata serializes");
        self.meta(key, text)
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (k, v) in &self.metadata {
            out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let csv_err = |e: csv::Error| CliError::io(PathBuf::from(path), e.into());
            w.write_record(&self.header).map_err(csv_err)?;
            for row in &self.rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| CliError::io(path, e))?;
        }
        write_bytes(path, &out)
    }
}
