//! Deterministic report emission: fixed formatting, no timestamps, and
//! write-temp-then-rename so readers never observe a partial file.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mercer_field::pikt::format_real;

use crate::error::CliError;

/// Writes `bytes` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp_name = OsString::from(path.as_os_str());
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `value` as pretty-printed JSON with a trailing newline and
/// writes it atomically.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Builds one RFC-4180-style CSV line from a label column and reals at 17
/// significant digits.
pub fn csv_row(out: &mut String, first: f64, rest: impl IntoIterator<Item = f64>) {
    out.push_str(&format_real(first));
    for v in rest {
        out.push(',');
        out.push_str(&format_real(v));
    }
    out.push('\n');
}

/// Builds a CSV header line `first,prefix_1,…,prefix_n`.
pub fn csv_header(out: &mut String, first: &str, prefix: &str, n: usize) {
    out.push_str(first);
    for idx in 1..=n {
        out.push(',');
        out.push_str(prefix);
        out.push('_');
        out.push_str(&idx.to_string());
    }
    out.push('\n');
}
