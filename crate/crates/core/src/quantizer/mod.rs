//! Extended RaBitQ quantization.
//!
//! The codebook is the set of normalized points of the shifted uniform grid
//! `{-(2^B-1)/2 + u : u = 0..2^B-1}^D`, rotated by `P`. For a unit vector in
//! rotated coordinates `o'`, the code is the grid point `y` maximizing
//! `<y/|y|, o'>`; [`quantize`] finds it exactly by sweeping the rescaling
//! factor `t` through every value at which the per-dimension rounding of
//! `t * o'` changes.

mod code;
mod encode;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub use code::{msb_words, read_field, rest_bytes, QuantizationCode};
pub use encode::{encode_vector, reconstruct, reduced_dim_encode, Factors, QuantizedVector};

use crate::error::{invalid, Error, Result};

pub const MAX_BITS: u8 = 12;
pub const DEFAULT_EPSILON0: f64 = 1.9;
const UNIT_NORM_TOLERANCE: f64 = 1e-4;

pub(crate) fn check_bits(bits: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid(format!("bits per dimension must be in [1, {MAX_BITS}], got {bits}")));
    }
    Ok(())
}

/// Parameters shared by every vector of an index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationConfig {
    bits: u8,
    dim: usize,
    epsilon0: f64,
}

impl QuantizationConfig {
    /// `dim` is the padded dimensionality and must be a positive multiple of 64.
    pub fn new(bits: u8, dim: usize, epsilon0: f64) -> Result<Self> {
        check_bits(bits)?;
        if dim == 0 || !dim.is_multiple_of(64) {
            return Err(invalid(format!("dimension {dim} is not a positive multiple of 64")));
        }
        if epsilon0.is_nan() || epsilon0 <= 0.0 {
            return Err(invalid(format!("epsilon0 must be positive, got {epsilon0}")));
        }
        Ok(Self { bits, dim, epsilon0 })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }
}

/// Output of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    /// Unsigned code `y_u = y + (2^B - 1)/2`, one value per dimension.
    pub code: Vec<u16>,
    /// `<o', y>` for the signed grid point `y`.
    pub ip_oy: f64,
    /// `|y|`.
    pub norm_y: f64,
}

impl Quantized {
    /// Cosine between `o'` and the chosen grid point.
    pub fn cosine(&self) -> f64 {
        self.ip_oy / self.norm_y
    }
}

#[derive(Debug, Clone, Copy)]
struct Critical {
    t: f64,
    dim: u32,
    /// Increment count this critical value moves `dim` to.
    step: u32,
}

impl PartialEq for Critical {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Critical {}

impl PartialOrd for Critical {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so `BinaryHeap` pops the smallest `t`, lower dimension first on ties.
impl Ord for Critical {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.dim.cmp(&self.dim))
    }
}

#[inline]
fn critical_value(step: u32, magnitude: f64) -> f64 {
    step as f64 / magnitude
}

/// Number of increments dimension `i` has received at rescaling factor `t`:
/// `#{k in 1..=max_steps : k / a <= t}`, evaluated with the same division the
/// sweep uses so that rounding reproduces the sweep state exactly.
fn steps_at(t: f64, a: f64, max_steps: u32) -> u32 {
    if a <= 0.0 || max_steps == 0 {
        return 0;
    }
    let mut k = (t * a).floor().clamp(0.0, max_steps as f64) as u32;
    while k < max_steps && critical_value(k + 1, a) <= t {
        k += 1;
    }
    while k > 0 && critical_value(k, a) > t {
        k -= 1;
    }
    k
}

/// Finds the grid point with maximum cosine to the unit vector `o_prime`.
///
/// Works on magnitudes `a_i = |o'_i|` in `o'`'s orthant, where each dimension's
/// magnitude ranges over `{0.5, 1.5, ..., 2^(B-1) - 0.5}`. Starting from all
/// magnitudes at 0.5, critical values `k / a_i` are popped in ascending order
/// from a min-heap; each pop raises one magnitude by one and updates `<y, o'>`
/// and `|y|^2` in O(1). The best ratio is evaluated once all increments sharing
/// a critical value are applied. The winner is rebuilt by rounding at the best
/// `t`. Zero coordinates take sign `+` and keep magnitude 0.5.
pub fn quantize(o_prime: &[f64], bits: u8) -> Result<Quantized> {
    check_bits(bits)?;
    if o_prime.is_empty() {
        return Err(invalid("cannot quantize an empty vector"));
    }
    let norm = o_prime.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dev = (norm - 1.0).abs();
    if dev.is_nan() || dev > UNIT_NORM_TOLERANCE {
        return Err(invalid(format!("quantize expects a unit vector, got norm {norm}")));
    }

    let max_steps = (1u32 << (bits - 1)) - 1;
    let mags: Vec<f64> = o_prime.iter().map(|x| x.abs()).collect();

    let mut ip = 0.5 * mags.iter().sum::<f64>();
    let mut sq = 0.25 * mags.len() as f64;

    let (mut best_ip, mut best_sq, mut best_t) = (ip, sq, 0.0f64);

    let mut heap: BinaryHeap<Critical> = BinaryHeap::with_capacity(mags.len());
    if max_steps > 0 {
        for (i, &a) in mags.iter().enumerate() {
            if a > 0.0 {
                heap.push(Critical { t: critical_value(1, a), dim: i as u32, step: 1 });
            }
        }
    }

    loop {
        let Some(mut top) = heap.peek_mut() else {
            break;
        };
        let Critical { t, dim, step } = *top;
        let i = dim as usize;
        let a = mags[i];
        // Magnitude (step - 0.5) -> (step + 0.5): |y|^2 grows by 2 * step.
        ip += a;
        sq += 2.0 * step as f64;
        if step < max_steps {
            top.t = critical_value(step + 1, a);
            top.step = step + 1;
            drop(top);
        } else {
            std::collections::binary_heap::PeekMut::pop(top);
        }
        if heap.peek().is_some_and(|next| next.t == t) {
            continue;
        }
        if ip * ip * best_sq > best_ip * best_ip * sq {
            best_ip = ip;
            best_sq = sq;
            best_t = t;
        }
    }

    let half = 1u32 << (bits - 1);
    let mut code = Vec::with_capacity(mags.len());
    let (mut ip_oy, mut sq_y) = (0.0f64, 0.0f64);
    for (&x, &a) in o_prime.iter().zip(&mags) {
        let k = steps_at(best_t, a, max_steps);
        let m = k as f64 + 0.5;
        ip_oy += a * m;
        sq_y += m * m;
        let u = if x >= 0.0 { half + k } else { half - 1 - k };
        code.push(u as u16);
    }

    let tracked = best_ip / best_sq.sqrt();
    let rebuilt = ip_oy / sq_y.sqrt();
    if sq_y != best_sq || (tracked - rebuilt).abs() > 1e-12 * tracked.max(1.0) {
        return Err(Error::Internal(format!(
            "rounding at t_max did not reproduce the tracked optimum ({rebuilt} vs {tracked})"
        )));
    }
    Ok(Quantized { code, ip_oy, norm_y: sq_y.sqrt() })
}

/// Signed grid coordinate for a code value: `u - (2^B - 1)/2`.
#[inline]
pub fn grid_value(u: u16, bits: u8) -> f64 {
    u as f64 - ((1u32 << bits) - 1) as f64 / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        unit(&v)
    }

    fn cosine_of(code: &[u16], o: &[f64], bits: u8) -> f64 {
        let y: Vec<f64> = code.iter().map(|&u| grid_value(u, bits)).collect();
        let ip: f64 = y.iter().zip(o).map(|(a, b)| a * b).sum();
        ip / y.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Enumerates every grid point; test-only oracle.
    fn brute_force_max(o: &[f64], bits: u8) -> f64 {
        let levels = 1u64 << bits;
        let total = levels.pow(o.len() as u32);
        let mut best = f64::NEG_INFINITY;
        let mut code = vec![0u16; o.len()];
        for idx in 0..total {
            let mut rest = idx;
            for c in code.iter_mut() {
                *c = (rest % levels) as u16;
                rest /= levels;
            }
            best = best.max(cosine_of(&code, o, bits));
        }
        best
    }

    #[test]
    fn one_bit_is_sign_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let o = random_unit(37, &mut rng);
            let q = quantize(&o, 1).unwrap();
            for (u, x) in q.code.iter().zip(&o) {
                assert_eq!(*u, (*x >= 0.0) as u16);
            }
            let want = o.iter().map(|x| x.abs()).sum::<f64>() / (37f64).sqrt();
            assert!((q.cosine() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_gets_equal_magnitudes() {
        let s = 0.5f64.sqrt();
        let q = quantize(&[s, s], 2).unwrap();
        let y: Vec<f64> = q.code.iter().map(|&u| grid_value(u, 2)).collect();
        assert_eq!(y[0], y[1]);
        assert!((q.cosine() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_small_example() {
        let o = unit(&[0.9, 0.3, 0.2, 0.1]);
        let q = quantize(&o, 2).unwrap();
        let best = brute_force_max(&o, 2);
        assert!((cosine_of(&q.code, &o, 2) - best).abs() <= 1e-12);
    }

    #[test]
    fn matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in 1..=4 {
            for bits in 1..=3u8 {
                for _ in 0..40 {
                    let o = random_unit(dim, &mut rng);
                    let q = quantize(&o, bits).unwrap();
                    let best = brute_force_max(&o, bits);
                    assert!((q.cosine() - best).abs() <= 1e-12, "dim {dim} bits {bits}: {} vs {best}", q.cosine());
                }
            }
        }
    }

    #[test]
    fn orthant_consistency_and_zero_coordinates() {
        let o = unit(&[0.0, -0.5, 0.7, 0.0, -0.1]);
        let q = quantize(&o, 4).unwrap();
        for (u, x) in q.code.iter().zip(&o) {
            let y = grid_value(*u, 4);
            if *x == 0.0 {
                assert_eq!(y, 0.5);
            } else {
                assert_eq!(y.signum(), x.signum());
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(quantize(&[0.5, 0.5], 2).is_err());
        assert!(quantize(&[1.0], 0).is_err());
        assert!(quantize(&[1.0], 13).is_err());
        assert!(quantize(&[], 2).is_err());
        assert!(quantize(&[1.00009], 2).is_ok());
    }

    #[test]
    fn reported_values_match_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for bits in 1..=9u8 {
            let o = random_unit(64, &mut rng);
            let q = quantize(&o, bits).unwrap();
            assert!((q.cosine() - cosine_of(&q.code, &o, bits)).abs() < 1e-12);
            assert!(q.code.iter().all(|&u| (u as u32) < (1 << bits)));
        }
    }

    #[test]
    fn mean_cosine_non_decreasing_in_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let vs: Vec<Vec<f64>> = (0..1000).map(|_| random_unit(64, &mut rng)).collect();
        let mut prev = 0.0;
        for bits in 1..=9u8 {
            let mean = vs.iter().map(|o| quantize(o, bits).unwrap().cosine()).sum::<f64>() / vs.len() as f64;
            assert!(mean >= prev, "bits {bits}: {mean} < {prev}");
            prev = mean;
        }
    }

    #[test]
    fn config_validation() {
        assert!(QuantizationConfig::new(4, 128, 1.9).is_ok());
        assert!(QuantizationConfig::new(4, 100, 1.9).is_err());
        assert!(QuantizationConfig::new(0, 128, 1.9).is_err());
        assert!(QuantizationConfig::new(4, 128, 0.0).is_err());
        assert!(QuantizationConfig::new(4, 128, f64::INFINITY).is_ok());
    }
}
