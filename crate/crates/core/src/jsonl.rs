//! Line-delimited JSON records and atomic file writes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

/// One line that failed to decode.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Reads every non-blank line of `path` as a `T`. Lines that fail to decode
/// are returned separately instead of aborting the read.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> io::Result<(Vec<T>, Vec<LineError>)> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(LineError {
                line: idx + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, errors))
}

/// Renders records as newline-terminated JSON lines.
pub fn to_lines<T: Serialize>(records: &[T]) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(io::Error::other)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    write_atomic(path, &to_lines(records)?)
}
