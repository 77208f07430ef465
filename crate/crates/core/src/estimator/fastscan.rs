//! Batched stage-1 kernel over blocks of 32 sign codes.
//!
//! Codes are stored transposed in 4-dimension groups: group `g` is 16 bytes,
//! byte `j` holding the nibble (dims `4g..4g+4`, bit `b` = dim `4g+b`) of code
//! `j` in its low half and of code `j + 16` in its high half. A block with
//! fewer than 32 live codes is zero-padded; `len` says how many are live.
//!
//! [`Kernel::Exact`] adds per-group partial sums of `q'` in `f64` and is
//! bit-identical to [`super::stage1_ip`]. [`Kernel::Table`] quantizes `q'` to
//! 8-bit levels, builds a 16-entry table per group, and accumulates integers.

use crate::error::{invalid, Error, Result};
use crate::quantizer::msb_words;

use super::QueryContext;

pub const BLOCK_SIZE: usize = 32;
const GROUP_BYTES: usize = 16;
/// Groups accumulated in 16-bit lanes before widening to 32 bits.
const WIDEN_EVERY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Exact,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsbBlock {
    dim: usize,
    len: usize,
    nibbles: Vec<u8>,
}

fn groups(dim: usize) -> usize {
    msb_words(dim) * 16
}

/// Bytes of one block for dimension `dim` (`32 * dim / 8` when `dim % 64 == 0`).
pub fn block_bytes(dim: usize) -> usize {
    groups(dim) * GROUP_BYTES
}

impl MsbBlock {
    /// Packs up to 32 MSB planes (as produced by `QuantizationCode::msb_plane`).
    pub fn pack(dim: usize, planes: &[&[u64]]) -> Result<Self> {
        if planes.len() > BLOCK_SIZE {
            return Err(invalid(format!("a block holds at most {BLOCK_SIZE} codes, got {}", planes.len())));
        }
        let words = msb_words(dim);
        let mut nibbles = vec![0u8; block_bytes(dim)];
        for (j, plane) in planes.iter().enumerate() {
            if plane.len() != words {
                return Err(invalid(format!("plane {j} has {} words, expected {words}", plane.len())));
            }
            let (lane, shift) = (j % 16, 4 * (j / 16));
            for g in 0..groups(dim) {
                let nib = (plane[g / 16] >> (4 * (g % 16)) & 0xf) as u8;
                nibbles[g * GROUP_BYTES + lane] |= nib << shift;
            }
        }
        Ok(Self { dim, len: planes.len(), nibbles })
    }

    pub fn from_bytes(dim: usize, len: usize, nibbles: Vec<u8>) -> Result<Self> {
        if len > BLOCK_SIZE || nibbles.len() != block_bytes(dim) {
            return Err(invalid("malformed block"));
        }
        Ok(Self { dim, len, nibbles })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Live (non-padding) codes in this block.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bytes(&self) -> &[u8] {
        &self.nibbles
    }

    #[inline]
    fn nibble(&self, g: usize, j: usize) -> u8 {
        self.nibbles[g * GROUP_BYTES + j % 16] >> (4 * (j / 16)) & 0xf
    }

    /// `<q', x_b>` of code `j` alone, summed exactly as [`Kernel::Exact`] does.
    pub fn code_ip(&self, j: usize, qc: &QueryContext) -> f64 {
        let mut sum = 0.0f64;
        for (g, t) in qc.group_sums().iter().enumerate() {
            sum += t[self.nibble(g, j) as usize];
        }
        sum
    }

    /// Recovers the MSB plane of code `j`.
    pub fn plane(&self, j: usize) -> Vec<u64> {
        let mut plane = vec![0u64; msb_words(self.dim)];
        for g in 0..groups(self.dim) {
            plane[g / 16] |= (self.nibble(g, j) as u64) << (4 * (g % 16));
        }
        plane
    }
}

/// 8-bit query quantization and per-group tables.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLut {
    q_min: f64,
    delta: f64,
    dim: usize,
    tables: Vec<[u16; 16]>,
}

impl QueryLut {
    pub fn build(q_prime: &[f64]) -> Self {
        let dim = q_prime.len();
        let q_min = q_prime.iter().copied().fold(f64::INFINITY, f64::min);
        let q_max = q_prime.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (q_min, delta) = if dim == 0 { (0.0, 0.0) } else { (q_min, (q_max - q_min) / 255.0) };
        let level = |i: usize| -> u16 {
            match q_prime.get(i) {
                Some(&q) if delta > 0.0 => ((q - q_min) / delta + 0.5).floor().clamp(0.0, 255.0) as u16,
                _ => 0,
            }
        };
        let tables = (0..groups(dim))
            .map(|g| {
                let lv = [level(4 * g), level(4 * g + 1), level(4 * g + 2), level(4 * g + 3)];
                let mut t = [0u16; 16];
                for (n, slot) in t.iter_mut().enumerate() {
                    *slot = (0..4).filter(|b| n >> b & 1 == 1).map(|b| lv[b]).sum();
                }
                t
            })
            .collect();
        Self { q_min, delta, dim, tables }
    }

    /// Query quantization step `(max q' - min q') / 255`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn tables(&self) -> &[[u16; 16]] {
        &self.tables
    }

    /// Declared worst-case absolute deviation of a table-mode inner product.
    pub fn deviation_bound(&self) -> f64 {
        self.dim as f64 * self.delta / 2.0
    }
}

/// Inner products `<q', x_b>` for every slot of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchIps {
    pub ips: [f64; BLOCK_SIZE],
    /// Bound on `|ips[j] - exact|`; zero in exact mode.
    pub max_deviation: f64,
}

pub fn batch_stage1(block: &MsbBlock, qc: &QueryContext, kernel: Kernel) -> Result<BatchIps> {
    if block.dim != qc.dim() {
        return Err(invalid(format!("block dimension {} != query dimension {}", block.dim, qc.dim())));
    }
    match kernel {
        Kernel::Exact => Ok(exact(block, qc)),
        Kernel::Table => {
            let lut =
                qc.lut().ok_or_else(|| Error::InvalidState("table kernel needs QueryContext::with_lut".into()))?;
            Ok(table(block, lut))
        }
    }
}

/// Same as [`batch_stage1`] over raw planes; exactly 32 are required.
pub fn batch_stage1_planes(planes: &[&[u64]], qc: &QueryContext, kernel: Kernel) -> Result<BatchIps> {
    if planes.len() != BLOCK_SIZE {
        return Err(invalid(format!("batch needs exactly {BLOCK_SIZE} codes, got {}", planes.len())));
    }
    batch_stage1(&MsbBlock::pack(qc.dim(), planes)?, qc, kernel)
}

fn exact(block: &MsbBlock, qc: &QueryContext) -> BatchIps {
    let mut ips = [0.0f64; BLOCK_SIZE];
    for (g, t) in qc.group_sums().iter().enumerate() {
        let group = &block.nibbles[g * GROUP_BYTES..(g + 1) * GROUP_BYTES];
        for (lane, &byte) in group.iter().enumerate() {
            ips[lane] += t[(byte & 0xf) as usize];
            ips[lane + 16] += t[(byte >> 4) as usize];
        }
    }
    BatchIps { ips, max_deviation: 0.0 }
}

fn table(block: &MsbBlock, lut: &QueryLut) -> BatchIps {
    let mut acc16 = [0u16; BLOCK_SIZE];
    let mut acc32 = [0u32; BLOCK_SIZE];
    let mut popcount = [0u32; BLOCK_SIZE];
    for (g, t) in lut.tables.iter().enumerate() {
        let group = &block.nibbles[g * GROUP_BYTES..(g + 1) * GROUP_BYTES];
        for (lane, &byte) in group.iter().enumerate() {
            let (lo, hi) = (byte & 0xf, byte >> 4);
            acc16[lane] = acc16[lane].saturating_add(t[lo as usize]);
            acc16[lane + 16] = acc16[lane + 16].saturating_add(t[hi as usize]);
            popcount[lane] += lo.count_ones();
            popcount[lane + 16] += hi.count_ones();
        }
        if (g + 1) % WIDEN_EVERY == 0 {
            for (wide, narrow) in acc32.iter_mut().zip(acc16.iter_mut()) {
                *wide += *narrow as u32;
                *narrow = 0;
            }
        }
    }
    let mut ips = [0.0f64; BLOCK_SIZE];
    for j in 0..BLOCK_SIZE {
        let levels = acc32[j] + acc16[j] as u32;
        ips[j] = popcount[j] as f64 * lut.q_min + levels as f64 * lut.delta;
    }
    BatchIps { ips, max_deviation: lut.deviation_bound() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::stage1_ip;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_planes(n: usize, words: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
        (0..n).map(|_| (0..words).map(|_| rng.random()).collect()).collect()
    }

    fn unit_query(dim: usize, rng: &mut ChaCha8Rng) -> QueryContext {
        let q: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        QueryContext::from_rotated(q.iter().map(|x| x / n).collect(), 1.0, 1.9).with_lut()
    }

    #[test]
    fn plane_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let planes = random_planes(20, 2, &mut rng);
        let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
        let block = MsbBlock::pack(128, &refs).unwrap();
        assert_eq!(block.len(), 20);
        assert_eq!(block.bytes().len(), 32 * 128 / 8);
        for (j, p) in planes.iter().enumerate() {
            assert_eq!(&block.plane(j), p);
        }
        assert!(block.plane(25).iter().all(|&w| w == 0));
    }

    #[test]
    fn exact_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let qc = unit_query(128, &mut rng);
            let planes = random_planes(32, 2, &mut rng);
            let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
            let out = batch_stage1_planes(&refs, &qc, Kernel::Exact).unwrap();
            for (j, p) in planes.iter().enumerate() {
                assert_eq!(out.ips[j].to_bits(), stage1_ip(p, &qc).to_bits());
            }
        }
    }

    #[test]
    fn wrong_batch_size_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qc = unit_query(64, &mut rng);
        let planes = random_planes(31, 1, &mut rng);
        let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
        assert!(batch_stage1_planes(&refs, &qc, Kernel::Exact).is_err());
        let planes = random_planes(33, 1, &mut rng);
        let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
        assert!(MsbBlock::pack(64, &refs).is_err());
    }

    #[test]
    fn table_needs_lut() {
        let qc = QueryContext::from_rotated(vec![0.125; 64], 1.0, 1.9);
        let block = MsbBlock::pack(64, &[&[1u64]]).unwrap();
        assert!(batch_stage1(&block, &qc, Kernel::Table).is_err());
    }

    #[test]
    fn constant_query_tables() {
        let v = 0.125;
        let qc = QueryContext::from_rotated(vec![v; 64], 1.0, 1.9).with_lut();
        let lut = qc.lut().unwrap();
        assert_eq!(lut.delta(), 0.0);
        // Every coordinate sits at level 0 of the offset grid, so p * 0 for any popcount p.
        assert!(lut.tables().iter().all(|t| t.iter().all(|&e| e == 0)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let planes = random_planes(32, 1, &mut rng);
        let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
        let out = batch_stage1_planes(&refs, &qc, Kernel::Table).unwrap();
        for (j, p) in planes.iter().enumerate() {
            assert!((out.ips[j] - p[0].count_ones() as f64 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn table_within_declared_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let qc = unit_query(128, &mut rng);
            let planes = random_planes(32, 2, &mut rng);
            let refs: Vec<&[u64]> = planes.iter().map(|p| p.as_slice()).collect();
            let block = MsbBlock::pack(128, &refs).unwrap();
            let approx = batch_stage1(&block, &qc, Kernel::Table).unwrap();
            let exact = batch_stage1(&block, &qc, Kernel::Exact).unwrap();
            let bound = qc.lut().unwrap().deviation_bound();
            assert_eq!(approx.max_deviation, bound);
            for j in 0..BLOCK_SIZE {
                assert!((approx.ips[j] - exact.ips[j]).abs() <= bound);
            }
        }
    }
}
