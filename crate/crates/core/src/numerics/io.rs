//! Binary matrix format used repo-wide.
//!
//! Layout, all little-endian:
//! magic `CROM1`, kind `u8` (0 = dense, 1 = sparse CSR), `u64` rows,
//! `u64` cols, then the payload. Dense: row-major `f64`. Sparse: `u64` nnz,
//! `row_ptr` (`rows+1` × `u64`), `col_idx` (`nnz` × `u64`), values (`nnz` × `f64`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::sparse::SparseMatrix;

pub const MAGIC: &[u8; 5] = b"CROM1";
const KIND_DENSE: u8 = 0;
const KIND_SPARSE: u8 = 1;

pub fn write_dense_to<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[KIND_DENSE])?;
    w.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dense_from<R: Read>(r: &mut R) -> Result<DenseMatrix> {
    let (kind, rows, cols) = read_header(r)?;
    if kind != KIND_DENSE {
        return Err(Error::Format(format!("expected dense matrix, found kind {kind}")));
    }
    let data = read_f64s(r, rows * cols)?;
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn write_sparse_to<W: Write>(w: &mut W, m: &SparseMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[KIND_SPARSE])?;
    w.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    let (row_ptr, col_idx, values) = m.raw_parts();
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for &p in row_ptr {
        w.write_all(&(p as u64).to_le_bytes())?;
    }
    for &c in col_idx {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_sparse_from<R: Read>(r: &mut R) -> Result<SparseMatrix> {
    let (kind, rows, cols) = read_header(r)?;
    if kind != KIND_SPARSE {
        return Err(Error::Format(format!("expected sparse matrix, found kind {kind}")));
    }
    let nnz = read_u64(r)? as usize;
    let row_ptr = read_u64s(r, rows + 1)?;
    let col_idx = read_u64s(r, nnz)?;
    let values = read_f64s(r, nnz)?;
    SparseMatrix::from_raw(rows, cols, row_ptr, col_idx, values)
}

pub fn write_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_dense(path: &Path) -> Result<DenseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    read_dense_from(&mut r)
}

pub fn write_sparse(path: &Path, m: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sparse_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_sparse(path: &Path) -> Result<SparseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    read_sparse_from(&mut r)
}

/// Vectors travel as 1×n dense matrices.
pub fn write_vector_to<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    let m = DenseMatrix::from_vec(1, v.len(), v.to_vec())?;
    write_dense_to(w, &m)
}

pub fn read_vector_from<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let m = read_dense_from(r)?;
    if m.n_rows() != 1 {
        return Err(Error::Format(format!(
            "expected a 1×n vector, found {}×{}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    Ok(m.data().to_vec())
}

fn read_header<R: Read>(r: &mut R) -> Result<(u8, usize, usize)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a matrix file".into()));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    Ok((kind[0], rows, cols))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_u64(r)? as usize);
    }
    Ok(out)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
