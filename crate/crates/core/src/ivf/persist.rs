//! Index file format. All integers and floats little-endian.
//!
//! ```text
//! "XRBQ" | version u32
//! config:    bits u8 | dim u32 | epsilon0 f64 | clusters u32 | n u64
//! rotator:   dim u32 | seed u64 | dim*dim f32 (row-major)
//! centroids: clusters*dim f32
//! per cluster:
//!   count u64 | ids count*u64
//!   MSB blocks    ceil(count/32) * 32*dim/8 bytes
//!   rest planes   count * dim*(bits-1)/8 bytes
//!   dist, f_rescale, f_rescale_1bit, f_error   count f32 each
//!   degenerate bitmap   ceil(count/8) bytes, bit i%8 of byte i/8
//! CRC-64/XZ of everything above, u64
//! ```

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::estimator::{block_bytes, MsbBlock, BLOCK_SIZE};
use crate::quantizer::{rest_bytes, QuantizationConfig};
use crate::rotator::RandomRotator;

use super::{Cluster, IvfIndex};

pub const MAGIC: [u8; 4] = *b"XRBQ";
pub const FORMAT_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("{what} runs past the end of the file (offset {})", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Corrupt(format!("{what} overflows")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt(what.into()))?, what)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u64s(&mut self, n: usize, what: &str) -> Result<Vec<u64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt(what.into()))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

impl IvfIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

        out.push(self.bits());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&self.config.epsilon0().to_le_bytes());
        out.extend_from_slice(&(self.clusters.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());

        out.extend_from_slice(&(self.rotator.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.rotator.seed().to_le_bytes());
        put_f32s(&mut out, self.rotator.matrix());

        put_f32s(&mut out, self.centroids.as_slice());

        for c in &self.clusters {
            out.extend_from_slice(&(c.len() as u64).to_le_bytes());
            for id in &c.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            for b in &c.blocks {
                out.extend_from_slice(b.bytes());
            }
            out.extend_from_slice(&c.rest);
            for arr in [&c.dist, &c.f_rescale, &c.f_rescale_1bit, &c.f_error] {
                put_f32s(&mut out, arr);
            }
            let mut bitmap = vec![0u8; c.len().div_ceil(8)];
            for (i, _) in c.degenerate.iter().enumerate().filter(|(_, &d)| d) {
                bitmap[i / 8] |= 1 << (i % 8);
            }
            out.extend_from_slice(&bitmap);
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Checks magic, then version, then checksum, and only then parses.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            let n = bytes.len().min(4);
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(Error::BadMagic { found });
        }
        if bytes.len() < 16 {
            return Err(Error::Corrupt("file too short to hold a header and checksum".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version { found: version, expected: FORMAT_VERSION });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let computed = CRC64.checksum(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader { bytes: body, pos: 8 };
        let bits = r.u8("bits")?;
        let dim = r.u32("dimension")? as usize;
        let epsilon0 = r.f64("epsilon0")?;
        let k = r.u32("cluster count")? as usize;
        let n = r.count("vector count")?;
        let config =
            QuantizationConfig::new(bits, dim, epsilon0).map_err(|e| Error::Corrupt(format!("config: {e}")))?;

        let rot_dim = r.u32("rotator dimension")? as usize;
        if rot_dim != dim {
            return Err(Error::Corrupt(format!("rotator dimension {rot_dim} != index dimension {dim}")));
        }
        let seed = r.u64("rotator seed")?;
        let matrix = r.f32s(dim * dim, "rotator matrix")?;
        let rotator = RandomRotator::from_parts(dim, seed, matrix).map_err(|e| Error::Corrupt(e.to_string()))?;
        let centroids =
            VectorSet::new(dim, r.f32s(k * dim, "centroids")?).map_err(|e| Error::Corrupt(e.to_string()))?;

        let stride = rest_bytes(dim, bits);
        let mut clusters = Vec::with_capacity(k);
        for ci in 0..k {
            let what = |s: &str| format!("cluster {ci} {s}");
            let count = r.count(&what("count"))?;
            if count > n {
                return Err(Error::Corrupt(what("count exceeds the vector total")));
            }
            let ids = r.u64s(count, &what("ids"))?;
            let mut blocks = Vec::with_capacity(count.div_ceil(BLOCK_SIZE));
            for b in 0..count.div_ceil(BLOCK_SIZE) {
                let live = (count - b * BLOCK_SIZE).min(BLOCK_SIZE);
                let raw = r.take(block_bytes(dim), &what("blocks"))?.to_vec();
                blocks.push(MsbBlock::from_bytes(dim, live, raw).map_err(|e| Error::Corrupt(e.to_string()))?);
            }
            let rest = r.take(count * stride, &what("rest planes"))?.to_vec();
            let dist = r.f32s(count, &what("distances"))?;
            let f_rescale = r.f32s(count, &what("f_rescale"))?;
            let f_rescale_1bit = r.f32s(count, &what("f_rescale_1bit"))?;
            let f_error = r.f32s(count, &what("f_error"))?;
            let bitmap = r.take(count.div_ceil(8), &what("degenerate bitmap"))?;
            let degenerate = (0..count).map(|i| bitmap[i / 8] >> (i % 8) & 1 == 1).collect();
            clusters.push(Cluster {
                ids,
                blocks,
                rest,
                rest_stride: stride,
                dist,
                f_rescale,
                f_rescale_1bit,
                f_error,
                degenerate,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes before the checksum", body.len() - r.pos)));
        }
        let index = Self { config, rotator, centroids, clusters };
        if index.len() != n {
            return Err(Error::Corrupt(format!("header says {n} vectors, clusters hold {}", index.len())));
        }
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
