//! CSV artifacts with a commented header that echoes the resolved config.
//! Stripping the leading `# ` from the config block gives a runnable file.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub struct Artifact {
    header: Vec<String>,
    body: csv::Writer<Vec<u8>>,
}

impl Artifact {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self, CliError> {
        let mut header = vec![
            format!("bifloq {} {command}", env!("CARGO_PKG_VERSION")),
            format!("seed = {seed}"),
            "config:".to_string(),
        ];
        let echo = toml::to_string(config).map_err(|e| CliError::Config(format!("cannot echo config: {e}")))?;
        header.extend(echo.lines().map(str::to_string));
        header.push("end config".to_string());
        Ok(Artifact { header, body: csv::Writer::from_writer(Vec::new()) })
    }

    /// Extra comment lines, written after the config block.
    pub fn note(&mut self, line: impl Into<String>) {
        self.header.push(line.into());
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.body.write_record(fields).map_err(|e| CliError::Config(format!("csv: {e}")))
    }

    pub fn finish(self, out: Option<&Path>) -> Result<(), CliError> {
        let mut text = String::new();
        for h in &self.header {
            text.push_str("# ");
            text.push_str(h);
            text.push('\n');
        }
        let body = self.body.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))?;
        let mut bytes = text.into_bytes();
        bytes.extend(body);
        emit(&bytes, out)
    }
}

pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Config(format!("stdout: {e}"))),
    }
}

/// Shortest round-trip formatting, `nan` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}
