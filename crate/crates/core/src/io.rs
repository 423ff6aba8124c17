//! Matrix and group-structure files.
//!
//! Two matrix formats are supported:
//!
//! * `csv`: one matrix row per line, comma-separated decimal literals, no header.
//! * `bin`: the 4 ASCII bytes `HSIM`, a version byte `0x01`, rows and cols as
//!   little-endian `u64`, then the row-major little-endian `f64` payload.
//!
//! Group files hold one 1-based group id per line, line `i` for atom `i`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{HsiError, Result};
use crate::model::GroupStructure;

pub const BIN_MAGIC: &[u8; 4] = b"HSIM";
pub const BIN_VERSION: u8 = 0x01;
const BIN_HEADER_LEN: u64 = 4 + 1 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    /// Picks the format from a file extension; anything other than `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Bin,
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| HsiError::io(path, e))?;
    match format {
        MatrixFormat::Bin => decode_bin(&bytes, path),
        MatrixFormat::Csv => {
            let text = String::from_utf8(bytes).map_err(|e| HsiError::Format {
                path: path.into(),
                message: format!("not valid UTF-8: {e}"),
            })?;
            parse_csv(&text, path)
        }
    }
}

pub fn save_matrix(m: &DMatrix<f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Bin => encode_bin(m),
        MatrixFormat::Csv => format_csv(m).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| HsiError::io(path, e))
}

/// Loads a matrix, choosing the format from the extension.
pub fn load_matrix_auto(path: &Path) -> Result<DMatrix<f64>> {
    load_matrix(path, MatrixFormat::from_path(path))
}

pub fn save_matrix_auto(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    save_matrix(m, path, MatrixFormat::from_path(path))
}

pub fn encode_bin(m: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(BIN_HEADER_LEN as usize + rows * cols * 8);
    out.extend_from_slice(BIN_MAGIC);
    out.push(BIN_VERSION);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

pub fn decode_bin(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    let format_err = |message: String| HsiError::Format {
        path: path.into(),
        message,
    };
    if (bytes.len() as u64) < BIN_HEADER_LEN {
        return Err(HsiError::Truncated {
            path: path.into(),
            expected: BIN_HEADER_LEN,
            available: bytes.len() as u64,
        });
    }
    if &bytes[..4] != BIN_MAGIC {
        return Err(format_err(format!(
            "bad magic bytes {:?}, expected \"HSIM\"",
            &bytes[..4]
        )));
    }
    if bytes[4] != BIN_VERSION {
        return Err(format_err(format!(
            "unsupported format version {}, expected {}",
            bytes[4], BIN_VERSION
        )));
    }
    let rows = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(BIN_HEADER_LEN))
        .filter(|n| usize::try_from(*n).is_ok())
        .ok_or_else(|| format_err(format!("dimension overflow: {rows} x {cols}")))?;
    let available = bytes.len() as u64;
    if available < expected {
        return Err(HsiError::Truncated {
            path: path.into(),
            expected,
            available,
        });
    }
    if available > expected {
        return Err(format_err(format!(
            "{} trailing bytes after a {rows} x {cols} payload",
            available - expected
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let payload = &bytes[BIN_HEADER_LEN as usize..];
    Ok(DMatrix::from_fn(rows, cols, |r, c| {
        let off = (r * cols + c) * 8;
        f64::from_le_bytes(payload[off..off + 8].try_into().expect("8 bytes"))
    }))
}

/// Shortest round-trip decimal representation, so csv files reload exactly.
pub fn format_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (j, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| HsiError::Parse {
                path: path.into(),
                line: i + 1,
                column: j + 1,
                message: format!("non-numeric cell `{}`", cell.trim()),
            })?;
            values.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(HsiError::Parse {
                    path: path.into(),
                    line: i + 1,
                    column: count.min(c) + 1,
                    message: format!("row has {count} cells, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn load_groups(path: &Path) -> Result<GroupStructure> {
    let text = fs::read_to_string(path).map_err(|e| HsiError::io(path, e))?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: usize = line.parse().map_err(|_| HsiError::Parse {
            path: path.into(),
            line: i + 1,
            column: 1,
            message: format!("expected a positive group id, got `{line}`"),
        })?;
        ids.push(id);
    }
    GroupStructure::from_group_ids(&ids)
}

pub fn save_groups(groups: &GroupStructure, path: &Path) -> Result<()> {
    let mut out = String::new();
    for id in groups.group_ids() {
        out.push_str(&id.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HsiError::io(path, e))
}
