//! Serialization of run results: JSON with 17 significant digits, CSV
//! tables for plotting, the run manifest and machine-readable errors.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// JSON formatter printing every float with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundTripFormatter;

impl Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as JSON with 17 significant digits and a trailing
/// newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Io(io::Error::other(e)))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

/// Hex SHA-256 of a JSON document with sorted keys.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Io(io::Error::other(e)))?;
    let text = to_json(&v)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Column-oriented CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        CsvTable { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text; the first line is a comment carrying the manifest hash.
    pub fn render(&self, hash: &str) -> String {
        let mut out = format!("# manifest_hash={hash}\n{}\n", self.header.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    module: &'a str,
    exit_code: i32,
    message: String,
}

/// Writes `error.json` describing a failed run.
pub fn write_error(dir: &Path, e: &Error) -> Result<PathBuf> {
    let r = ErrorReport { module: e.module(), exit_code: e.exit_code(), message: e.to_string() };
    write_file(dir, "error.json", &to_json(&r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let xs = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0];
        let text = to_json(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, xs);
        assert!(text.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn non_finite_is_null() {
        assert_eq!(to_json(&[f64::NAN]).unwrap(), "[null]\n");
    }

    #[test]
    fn hash_is_stable() {
        let a = content_hash(&serde_json::json!({"b": 1.0, "a": [1, 2]})).unwrap();
        let b = content_hash(&serde_json::json!({"a": [1, 2], "b": 1.0})).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn csv_has_hash_line() {
        let mut t = CsvTable::new("x", &["s", "v"]);
        t.push(vec![0.5, 2.0]);
        let text = t.render("abc");
        assert_eq!(text.lines().next(), Some("# manifest_hash=abc"));
        assert_eq!(text.lines().nth(2), Some("5.0000000000000000e-1,2.0000000000000000e0"));
    }
}
