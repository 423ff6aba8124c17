//! 16-bit binary portable graymap output.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub const MAXVAL: u16 = 65535;

/// Maps `[0, 1]` to `[0, MAXVAL]`, clamping outside values.
pub fn gray_level(v: f64) -> u16 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * MAXVAL as f64).round() as u16
}

/// `P5` image bytes for row-major `values` (big-endian samples).
pub fn encode_pgm16(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pgm: pixel count");
    let mut out = format!("P5\n{width} {height}\n{MAXVAL}\n").into_bytes();
    out.reserve(2 * values.len());
    for &v in values {
        out.extend_from_slice(&gray_level(v).to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm16(width, height, values))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
