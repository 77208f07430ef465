//! Uniform scalar quantizers used as accuracy baselines.
//!
//! [`SqModel`] shares one `[v_lo, v_hi]` range across the whole dataset; LVQ
//! ([`lvq_encode`]) fits the range per vector. Both round to the nearest of
//! `2^B` evenly spaced levels, halves rounding up. Distances are estimated by
//! decoding and computing the exact float distance.

use crate::dataset::VectorSet;
use crate::error::{check_len, invalid, Result};
use crate::quantizer::MAX_BITS;

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid(format!("bits must be in [1, {MAX_BITS}], got {bits}")));
    }
    Ok(())
}

fn levels(bits: u8) -> f64 {
    ((1u32 << bits) - 1) as f64
}

fn encode_range(v: &[f32], lo: f64, hi: f64, bits: u8) -> Vec<u16> {
    let top = levels(bits);
    if hi <= lo {
        return vec![0; v.len()];
    }
    let scale = top / (hi - lo);
    v.iter().map(|&x| ((x as f64 - lo) * scale + 0.5).floor().clamp(0.0, top) as u16).collect()
}

fn decode_range(codes: &[u16], lo: f64, hi: f64, bits: u8) -> Vec<f32> {
    let step = if hi > lo { (hi - lo) / levels(bits) } else { 0.0 };
    codes.iter().map(|&c| (lo + c as f64 * step) as f32).collect()
}

fn min_max<'a>(xs: impl Iterator<Item = &'a f32>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x as f64), hi.max(x as f64)))
}

/// Global-range scalar quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqModel {
    pub v_lo: f64,
    pub v_hi: f64,
    pub bits: u8,
    pub dim: usize,
}

impl SqModel {
    pub fn fit(data: &VectorSet, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        data.require_non_empty("data")?;
        let (v_lo, v_hi) = min_max(data.as_slice().iter());
        Ok(Self { v_lo, v_hi, bits, dim: data.dim() })
    }

    pub fn encode(&self, v: &[f32]) -> Result<Vec<u16>> {
        check_len("vector", self.dim, v.len())?;
        Ok(encode_range(v, self.v_lo, self.v_hi, self.bits))
    }

    pub fn decode(&self, codes: &[u16]) -> Result<Vec<f32>> {
        check_len("codes", self.dim, codes.len())?;
        Ok(decode_range(codes, self.v_lo, self.v_hi, self.bits))
    }
}

/// Per-vector range and codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LvqCode {
    pub v_lo: f64,
    pub v_hi: f64,
    pub bits: u8,
    pub codes: Vec<u16>,
}

pub fn lvq_encode(v: &[f32], bits: u8) -> Result<LvqCode> {
    check_bits(bits)?;
    if v.is_empty() {
        return Err(invalid("cannot encode an empty vector"));
    }
    let (v_lo, v_hi) = min_max(v.iter());
    Ok(LvqCode { v_lo, v_hi, bits, codes: encode_range(v, v_lo, v_hi, bits) })
}

pub fn lvq_decode(code: &LvqCode) -> Vec<f32> {
    decode_range(&code.codes, code.v_lo, code.v_hi, code.bits)
}

/// `|a - b|^2` accumulated in `f64`.
pub fn sqdist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sq_examples() {
        let m = SqModel { v_lo: 0.0, v_hi: 3.0, bits: 2, dim: 2 };
        assert_eq!(m.encode(&[1.4, 3.0]).unwrap(), vec![1, 3]);
        assert_eq!(m.decode(&[1, 3]).unwrap(), vec![1.0, 3.0]);
        // Midpoint rounds up.
        assert_eq!(m.encode(&[1.5, -4.0]).unwrap(), vec![2, 0]);
    }

    #[test]
    fn degenerate_range() {
        let data = VectorSet::new(2, vec![2.5; 4]).unwrap();
        let m = SqModel::fit(&data, 4).unwrap();
        assert_eq!(m.encode(&[2.5, 2.5]).unwrap(), vec![0, 0]);
        assert_eq!(m.decode(&[0, 0]).unwrap(), vec![2.5, 2.5]);
        let c = lvq_encode(&[-1.0; 5], 3).unwrap();
        assert_eq!(c.v_lo, c.v_hi);
        assert_eq!(lvq_decode(&c), vec![-1.0; 5]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn sq_round_trip_bound(x in -10.0f32..10.0, bits in 1u8..=8) {
            let m = SqModel { v_lo: -10.0, v_hi: 10.0, bits, dim: 1 };
            let back = m.decode(&m.encode(&[x]).unwrap()).unwrap()[0];
            let bound = 20.0 / (2.0 * levels(bits));
            prop_assert!(((x - back).abs() as f64) <= bound + 1e-5);
        }
    }

    proptest! {
        #[test]
        fn lvq_round_trip_bound(v in prop::collection::vec(-5.0f32..5.0, 1..64), bits in 1u8..=8) {
            let c = lvq_encode(&v, bits).unwrap();
            let bound = (c.v_hi - c.v_lo) / (2.0 * levels(bits));
            for (x, y) in v.iter().zip(lvq_decode(&c)) {
                prop_assert!(((x - y).abs() as f64) <= bound + 1e-5);
            }
        }
    }
}
