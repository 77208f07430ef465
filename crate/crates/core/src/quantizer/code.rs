//! Bit-plane code layout.
//!
//! A `B`-bit code value `u` is split as `u = 2^(B-1) * msb + last`:
//!
//! * `msb_plane`: one bit per dimension, dimension `i` at bit `i % 64` of word
//!   `i / 64`. This is exactly the 1-bit sign code.
//! * `rest_planes`: the `(B-1)`-bit `last` values, dimension-major. Dimension
//!   `i` occupies stream bits `[i*(B-1), (i+1)*(B-1))`, least significant bit
//!   first; stream bit `s` is bit `s % 8` of byte `s / 8`. Dimensions are
//!   grouped in blocks of 64 (`8*(B-1)` bytes each) and a partial last block
//!   is zero-padded.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizationCode {
    dim: usize,
    bits: u8,
    msb_plane: Vec<u64>,
    rest_planes: Vec<u8>,
}

pub fn msb_words(dim: usize) -> usize {
    dim.div_ceil(64)
}

/// Bytes of `rest_planes` for one vector.
pub fn rest_bytes(dim: usize, bits: u8) -> usize {
    msb_words(dim) * 8 * (bits as usize - 1)
}

impl QuantizationCode {
    /// Splits raw `B`-bit values into the MSB plane and the packed remainder.
    pub fn pack(raw: &[u16], bits: u8) -> Result<Self> {
        super::check_bits(bits)?;
        let dim = raw.len();
        let limit = 1u32 << bits;
        let shift = bits - 1;
        let mut msb_plane = vec![0u64; msb_words(dim)];
        let mut rest_planes = vec![0u8; rest_bytes(dim, bits)];
        let low_mask = (1u16 << shift) - 1;
        for (i, &v) in raw.iter().enumerate() {
            if v as u32 >= limit {
                return Err(invalid(format!("code value {v} at dimension {i} does not fit in {bits} bits")));
            }
            if v >> shift != 0 {
                msb_plane[i / 64] |= 1 << (i % 64);
            }
            if shift > 0 {
                write_field(&mut rest_planes, i * shift as usize, shift, v & low_mask);
            }
        }
        Ok(Self { dim, bits, msb_plane, rest_planes })
    }

    /// Reassembles a code from its stored planes (shape-checked only).
    pub fn from_planes(dim: usize, bits: u8, msb_plane: Vec<u64>, rest_planes: Vec<u8>) -> Result<Self> {
        super::check_bits(bits)?;
        if msb_plane.len() != msb_words(dim) || rest_planes.len() != rest_bytes(dim, bits) {
            return Err(invalid("plane lengths do not match dimension and bit width"));
        }
        Ok(Self { dim, bits, msb_plane, rest_planes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn msb_plane(&self) -> &[u64] {
        &self.msb_plane
    }

    pub fn rest_planes(&self) -> &[u8] {
        &self.rest_planes
    }

    #[inline]
    pub fn msb(&self, i: usize) -> bool {
        self.msb_plane[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn last(&self, i: usize) -> u16 {
        read_field(&self.rest_planes, i, self.bits - 1)
    }

    pub fn value(&self, i: usize) -> u16 {
        ((self.msb(i) as u16) << (self.bits - 1)) | self.last(i)
    }

    pub fn unpack(&self) -> Vec<u16> {
        (0..self.dim).map(|i| self.value(i)).collect()
    }
}

fn write_field(stream: &mut [u8], bit_offset: usize, width: u8, value: u16) {
    for b in 0..width as usize {
        if value >> b & 1 == 1 {
            let s = bit_offset + b;
            stream[s / 8] |= 1 << (s % 8);
        }
    }
}

/// Reads the `width`-bit field of dimension `i` (`width <= 11`).
#[inline]
pub fn read_field(stream: &[u8], i: usize, width: u8) -> u16 {
    if width == 0 {
        return 0;
    }
    let s = i * width as usize;
    let byte = s / 8;
    let mut word = 0u32;
    for k in 0..3 {
        if let Some(&b) = stream.get(byte + k) {
            word |= (b as u32) << (8 * k);
        }
    }
    ((word >> (s % 8)) & ((1u32 << width) - 1)) as u16
}
