use crate::error::{check_len, Result};
use crate::rotator::{RandomRotator, ReducedRotator};

use super::{check_bits, grid_value, quantize, QuantizationCode};

/// Per-vector scalars consumed by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Factors {
    /// `|o_r - c|`.
    pub dist_to_centroid: f64,
    /// `1 / (|y| * <o, o_bar>)`, full-code estimator.
    pub f_rescale: f64,
    /// `1 / <o, o_bar0>`, sign-code estimator.
    pub f_rescale_1bit: f64,
    /// `sqrt(1 - <o, o_bar0>^2) / (<o, o_bar0> * sqrt(D - 1))`, sign-code error bound.
    pub f_error: f64,
    /// `o_r == c`; every estimate degenerates to `|q_r - c|^2`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub code: QuantizationCode,
    pub factors: Factors,
    /// `<o, o_bar>` for the full code.
    pub ip_o_obar: f64,
    /// `<o, o_bar0>` for the sign code alone.
    pub ip_o_obar0: f64,
    /// `|y|` of the signed grid point.
    pub norm_y: f64,
}

impl QuantizedVector {
    pub fn bits(&self) -> u8 {
        self.code.bits()
    }

    pub fn dim(&self) -> usize {
        self.code.dim()
    }
}

/// Quantizes `o_r` relative to centroid `c` with `rotator` defining the codebook.
///
/// Computes `o = (o_r - c)/|o_r - c|`, `o' = P^-1 o`, runs [`quantize`] and fills
/// in the estimator factors.
pub fn encode_vector(o_r: &[f32], c: &[f32], rotator: &RandomRotator, bits: u8) -> Result<QuantizedVector> {
    check_bits(bits)?;
    let dim = rotator.dim();
    check_len("data vector", dim, o_r.len())?;
    check_len("centroid", dim, c.len())?;
    let diff: Vec<f64> = o_r.iter().zip(c).map(|(&a, &b)| a as f64 - b as f64).collect();
    let norm = l2(&diff);
    if norm == 0.0 {
        return degenerate(dim, bits);
    }
    let o: Vec<f64> = diff.iter().map(|x| x / norm).collect();
    let o_prime = rotator.apply_inverse(&o)?;
    encode_rotated(&o_prime, norm, bits)
}

/// 1-bit encoding in a `d`-dimensional random projection of `o_r - c`.
///
/// The stored distance is the original `|o_r - c|`, not the projected norm.
pub fn reduced_dim_encode(o_r: &[f32], c: &[f32], rd: &ReducedRotator) -> Result<QuantizedVector> {
    check_len("data vector", rd.in_dim(), o_r.len())?;
    check_len("centroid", rd.in_dim(), c.len())?;
    let diff: Vec<f64> = o_r.iter().zip(c).map(|(&a, &b)| a as f64 - b as f64).collect();
    let norm = l2(&diff);
    if norm == 0.0 {
        return degenerate(rd.out_dim(), 1);
    }
    let o: Vec<f64> = diff.iter().map(|x| x / norm).collect();
    let mut image = rd.project(&o)?;
    let image_norm = l2(&image);
    if image_norm == 0.0 {
        // Orthogonal to the projection: nothing is known about the direction.
        return degenerate(rd.out_dim(), 1).map(|mut qv| {
            qv.factors.dist_to_centroid = norm;
            qv.factors.degenerate = false;
            qv
        });
    }
    image.iter_mut().for_each(|x| *x /= image_norm);
    encode_rotated(&image, norm, 1)
}

fn encode_rotated(o_prime: &[f64], dist: f64, bits: u8) -> Result<QuantizedVector> {
    let dim = o_prime.len();
    let q = quantize(o_prime, bits)?;
    let code = QuantizationCode::pack(&q.code, bits)?;
    let ip_o_obar = q.ip_oy / q.norm_y;
    // Sign code: o_bar0 = P (2 x_b - 1)/sqrt(D), and sign(o'_i) matches x_b.
    let ip_o_obar0 = o_prime.iter().map(|x| x.abs()).sum::<f64>() / (dim as f64).sqrt();
    let f_error = if dim > 1 {
        let s = (1.0 - ip_o_obar0 * ip_o_obar0).max(0.0);
        s.sqrt() / (ip_o_obar0 * ((dim - 1) as f64).sqrt())
    } else {
        0.0
    };
    Ok(QuantizedVector {
        code,
        factors: Factors {
            dist_to_centroid: dist,
            f_rescale: 1.0 / (q.norm_y * ip_o_obar),
            f_rescale_1bit: 1.0 / ip_o_obar0,
            f_error,
            degenerate: false,
        },
        ip_o_obar,
        ip_o_obar0,
        norm_y: q.norm_y,
    })
}

/// Code of the zero direction (all signs `+`, magnitude 0.5) with zeroed factors.
fn degenerate(dim: usize, bits: u8) -> Result<QuantizedVector> {
    let raw = vec![1u16 << (bits - 1); dim];
    Ok(QuantizedVector {
        code: QuantizationCode::pack(&raw, bits)?,
        factors: Factors { degenerate: true, ..Factors::default() },
        ip_o_obar: 0.0,
        ip_o_obar0: 0.0,
        norm_y: 0.5 * (dim as f64).sqrt(),
    })
}

/// `P * y / |y|`, the codebook vector selected by `code`. Test and diagnostics path.
pub fn reconstruct(code: &QuantizationCode, rotator: &RandomRotator) -> Result<Vec<f64>> {
    check_len("code", rotator.dim(), code.dim())?;
    let y: Vec<f64> = code.unpack().iter().map(|&u| grid_value(u, code.bits())).collect();
    let n = l2(&y);
    let unit: Vec<f64> = y.iter().map(|v| v / n).collect();
    rotator.apply_forward(&unit)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
