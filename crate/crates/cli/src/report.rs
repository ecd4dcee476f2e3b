use std::io::Write;
use std::path::Path;

use robust_beliefs::quadrature::QuadratureSpec;
use serde::Serialize;
use serde_json::Value;

use crate::args::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "robust-beliefs.report/1";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub residuals: Value,
    pub quadrature: Option<QuadratureSpec>,
    /// Present only with `--timing`.
    pub wall_time_ms: Option<u64>,
    pub crate_version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub schema_version: &'static str,
    pub config_echo: RunConfig,
    pub results: Value,
    pub provenance: Provenance,
}

/// Header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Comma separated, LF line endings, header first. Short rows are padded
    /// with blank cells.
    pub fn to_csv(&self) -> String {
        let width = self.header.len();
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            let mut cells = r.clone();
            cells.resize(width.max(r.len()), String::new());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

/// Temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: path.display().to_string(), message: e.to_string() };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
