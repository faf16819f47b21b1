//! Binary PGM (P5, 8-bit) reading and writing. Pixel values map to [0, 1]
//! on read and are clamped and rounded back to 8 bits on write.

use crate::error::{AclsError, Result};
use crate::numerics::Matrix;
use std::io::{Read, Write};
use std::path::Path;

fn parse_header_token(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    // Skip whitespace and `#` comment lines.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(AclsError::Parse("pgm: malformed header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| AclsError::Parse("pgm: malformed header".into()))
}

/// Reads a binary P5 PGM into an H x W matrix with values in [0, 1].
pub fn read_pgm(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(AclsError::Parse(format!(
            "{}: not a binary P5 pgm",
            path.display()
        )));
    }
    let mut pos = 2;
    let width = parse_header_token(&bytes, &mut pos)? as usize;
    let height = parse_header_token(&bytes, &mut pos)? as usize;
    let maxval = parse_header_token(&bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(AclsError::Parse(format!(
            "{}: only 8-bit pgm supported (maxval {maxval})",
            path.display()
        )));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + width * height {
        return Err(AclsError::Parse(format!(
            "{}: truncated pixel data",
            path.display()
        )));
    }
    let data: Vec<f64> = bytes[pos..pos + width * height]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    Matrix::from_row_major(height, width, data)
}

/// Writes an H x W matrix with values in [0, 1] as an 8-bit binary PGM.
pub fn write_pgm(path: &Path, image: &Matrix) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    write!(out, "P5\n{} {}\n255\n", image.cols(), image.rows())?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}
