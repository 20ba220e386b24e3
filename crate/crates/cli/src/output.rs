//! Result files: CSV with `#` metadata headers, pretty JSON, and the run
//! manifest. Nothing time-dependent goes into the data files, so reruns are
//! byte-identical; the manifest alone carries the timestamp and duration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Shortest round-trip rendering; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_path: String,
    config_sha256: &'a str,
    resolved: &'a [String],
    outputs: &'a [FileEntry],
    timestamp: String,
    duration_s: f64,
}

/// Collects the files a subcommand writes into its output directory.
pub struct Outputs {
    dir: PathBuf,
    header: Vec<String>,
    files: Vec<FileEntry>,
}

impl Outputs {
    pub fn new(dir: &Path, header: Vec<String>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_owned(), header, files: Vec::new() })
    }

    fn put(&mut self, name: &str, body: String) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &body).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(FileEntry { path: name.to_owned(), sha256: sha256_hex(body.as_bytes()), bytes: body.len() });
        Ok(())
    }

    /// Writes a CSV. `extra` lines go after the shared header.
    pub fn csv<I>(&mut self, name: &str, extra: &[String], columns: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut body = String::new();
        for line in self.header.iter().chain(extra) {
            let _ = writeln!(body, "# {line}");
        }
        body.push_str(&columns.join(","));
        body.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.put(name, body)
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.put(name, body)
    }

    pub fn text(&mut self, name: &str, body: String) -> Result<()> {
        self.put(name, body)
    }

    pub fn finish(self, subcommand: &str, config_path: &Path, config_digest: &str, started: Instant) -> Result<()> {
        let manifest = Manifest {
            tool: "cascopt",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_path: config_path.display().to_string(),
            config_sha256: config_digest,
            resolved: &self.header,
            outputs: &self.files,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            duration_s: started.elapsed().as_secs_f64(),
        };
        let mut body = serde_json::to_string_pretty(&manifest)?;
        body.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// File-name friendly rendering of a ratio such as `0.75`.
pub fn tag(x: f64) -> String {
    fmt_f64(x).replace('-', "m")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1, 1e-7, 6.25e6, 1.234_567_890_123_456_7e20, f64::MIN_POSITIVE, 3e-300] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(0.75), "0.75");
    }
}
