//! Binary matrix container: 8-byte magic, u64 rows, u64 cols (little
//! endian), then row-major f64 payload. Used for persisted subspace models
//! and importable dictionaries.

use crate::error::{AclsError, Result};
use crate::numerics::Matrix;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ACLSMAT1";

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    out.write_all(MAGIC)?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    out.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.data().len() * 8);
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(AclsError::Parse(format!(
            "{}: not an ACLSMAT1 container",
            path.display()
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let need = 24 + rows * cols * 8;
    if bytes.len() != need {
        return Err(AclsError::Parse(format!(
            "{}: payload length {} does not match {}x{}",
            path.display(),
            bytes.len() - 24,
            rows,
            cols
        )));
    }
    let data: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_row_major(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join("acls_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.bin");
        let m = Matrix::from_row_major(2, 3, vec![1.0, -2.5, 3.25, 0.0, 1e-300, 7.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = std::env::temp_dir().join("acls_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, b"NOTMAGIC0000000000000000").unwrap();
        assert!(read_matrix(&path).is_err());
    }
}
