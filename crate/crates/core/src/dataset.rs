//! Dense row-major `f32` vector sets and the `.fvecs` / `.ivecs` containers.
//!
//! Both containers are a sequence of records `dim: u32 LE` followed by `dim`
//! little-endian payload values (`f32` or `i32`); every record must share `dim`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{check_len, invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            if !data.is_empty() {
                return Err(invalid("zero-dimensional set with payload"));
            }
        } else if !data.len().is_multiple_of(dim) {
            return Err(invalid(format!("{} values do not split into rows of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            check_len(&format!("row {i}"), dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if self.is_empty() && self.dim == 0 {
            self.dim = row.len();
        }
        check_len("pushed row", self.dim, row.len())?;
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Rejects empty sets; most consumers need at least one vector.
    pub fn require_non_empty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            return Err(invalid(format!("{what} is empty")));
        }
        Ok(())
    }

    /// Zero-pads every row to `dim` (no-op when already that wide).
    pub fn padded(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(invalid(format!("cannot pad {}-dimensional rows to {dim}", self.dim)));
        }
        if dim == self.dim {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.len() * dim);
        for r in self.rows() {
            data.extend_from_slice(r);
            data.resize(data.len() + dim - self.dim, 0.0);
        }
        Self::new(dim, data)
    }

    /// Mean of all rows, accumulated in `f64`.
    pub fn centroid(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for r in self.rows() {
            for (a, &x) in acc.iter_mut().zip(r) {
                *a += x as f64;
            }
        }
        let n = self.len().max(1) as f64;
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }
}

/// Smallest multiple of 64 that holds `dim`.
pub fn padded_dim(dim: usize) -> usize {
    dim.div_ceil(64).max(1) * 64
}

/// Copies `v` into a zero-padded vector of length `dim`.
pub fn pad_vector(v: &[f32], dim: usize) -> Result<Vec<f32>> {
    if v.len() > dim {
        return Err(invalid(format!("vector of length {} exceeds dimension {dim}", v.len())));
    }
    let mut out = v.to_vec();
    out.resize(dim, 0.0);
    Ok(out)
}

fn parse_records<T, F>(bytes: &[u8], decode: F) -> Result<(usize, Vec<T>)>
where
    F: Fn([u8; 4]) -> T,
{
    let mut offset = 0usize;
    let mut dim = None;
    let mut out = Vec::new();
    while offset < bytes.len() {
        let header = bytes
            .get(offset..offset + 4)
            .ok_or_else(|| Error::Parse { offset: offset as u64, message: "truncated record header".into() })?;
        let d = u32::from_le_bytes(header.try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::Parse { offset: offset as u64, message: "record dimension is 0".into() });
        }
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Parse {
                    offset: offset as u64,
                    message: format!("record dimension {d} differs from {expected}"),
                })
            }
            _ => {}
        }
        let body = bytes.get(offset + 4..offset + 4 + 4 * d).ok_or_else(|| Error::Parse {
            offset: offset as u64,
            message: format!("truncated record: need {} payload bytes", 4 * d),
        })?;
        out.extend(body.chunks_exact(4).map(|c| decode(c.try_into().unwrap())));
        offset += 4 + 4 * d;
    }
    Ok((dim.unwrap_or(0), out))
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<VectorSet> {
    let (dim, data) = parse_records(bytes, f32::from_le_bytes)?;
    VectorSet::new(dim, data)
}

pub fn encode_fvecs(set: &VectorSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(set.len() * (4 + 4 * set.dim()));
    for r in set.rows().take(set.len()) {
        out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
        for &x in r {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorSet> {
    parse_fvecs(&fs::read(path)?)
}

pub fn write_fvecs(path: impl AsRef<Path>, set: &VectorSet) -> Result<()> {
    fs::write(path, encode_fvecs(set))?;
    Ok(())
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<i32>>> {
    let (dim, flat) = parse_records(bytes, i32::from_le_bytes)?;
    Ok(if dim == 0 { Vec::new() } else { flat.chunks_exact(dim).map(<[i32]>::to_vec).collect() })
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    parse_ivecs(&fs::read(path)?)
}

/// Writes id lists; all lists must have the same length.
pub fn write_ivecs(path: impl AsRef<Path>, lists: &[Vec<i32>]) -> Result<()> {
    let dim = lists.first().map_or(0, Vec::len);
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, l) in lists.iter().enumerate() {
        check_len(&format!("id list {i}"), dim, l.len())?;
        if dim == 0 {
            return Err(invalid("cannot write empty id lists"));
        }
        w.write_all(&(dim as u32).to_le_bytes())?;
        for &x in l {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
