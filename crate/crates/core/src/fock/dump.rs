//! Binary dump of Fock operators: 8-byte magic, dimension as little-endian
//! `u64`, then row-major `(re, im)` pairs of little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FockOperator;
use crate::error::{Error, Result};

pub const DUMP_MAGIC: [u8; 8] = *b"SPMFOCK1";

pub fn write_operator(path: &Path, op: &FockOperator) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&DUMP_MAGIC)?;
    out.write_all(&(op.dim() as u64).to_le_bytes())?;
    for i in 0..op.dim() {
        for j in 0..op.dim() {
            let c = op.get(i, j);
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_operator(path: &Path) -> Result<FockOperator> {
    let mut input = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..8] != DUMP_MAGIC {
        return Err(Error::Parse {
            position: 0,
            message: "not a Fock operator dump".into(),
        });
    }
    let dim = u64::from_le_bytes(header[8..].try_into().expect("8 bytes")) as usize;
    let mut buf = vec![0u8; dim * dim * 16];
    input.read_exact(&mut buf)?;
    let f = |k: usize| f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        Complex64::new(f(k), f(k + 1))
    });
    Ok(FockOperator::new(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join(format!("spm-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("op.bin");
        let op = FockOperator::new(DMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64, -(j as f64) / 3.0)));
        write_operator(&path, &op).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 9 * 16);
        assert_eq!(read_operator(&path).unwrap(), op);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
