//! Query preprocessing and two-stage distance estimation.
//!
//! Squared distances are recovered from the centroid decomposition
//!
//! ```text
//! |o_r - q_r|^2 = |o_r - c|^2 + |q_r - c|^2 - 2 |o_r - c| |q_r - c| <o, q>
//! ```
//!
//! with `<o, q>` estimated as `<o_bar, q> / <o_bar, o>`. Stage 1 uses only the
//! MSB plane (the 1-bit sign code) and carries a probabilistic error bound used
//! for pruning. Stage 2 adds the remaining planes, reusing the stage-1 inner
//! product: `<y_u, q'> = 2^(B-1) <y_0, q'> + <y_last, q'>`.

mod fastscan;

pub use fastscan::{batch_stage1, batch_stage1_planes, block_bytes, BatchIps, Kernel, MsbBlock, QueryLut, BLOCK_SIZE};

use crate::error::{check_len, Error, Result};
use crate::quantizer::{read_field, Factors, QuantizedVector};
use crate::rotator::{RandomRotator, ReducedRotator};

/// Per-query state against one centroid.
#[derive(Debug, Clone)]
pub struct QueryContext {
    q_prime: Vec<f64>,
    sum_qprime: f64,
    dist_q_centroid: f64,
    epsilon0: f64,
    /// Per 4-dimension group, the sum of `q'` over each nibble's set bits.
    group_sums: Vec<[f64; 16]>,
    lut: Option<QueryLut>,
}

/// Partial sums of `q'[4g..4g+4]` for every nibble, bits added in ascending order.
fn group_sums(q: &[f64]) -> Vec<[f64; 16]> {
    q.chunks(4)
        .map(|g| {
            let mut t = [0.0f64; 16];
            for (n, slot) in t.iter_mut().enumerate() {
                for (b, &x) in g.iter().enumerate() {
                    if n >> b & 1 == 1 {
                        *slot += x;
                    }
                }
            }
            t
        })
        .collect()
}

impl QueryContext {
    /// Builds a context from an already rotated and normalized query.
    pub fn from_rotated(q_prime: Vec<f64>, dist_q_centroid: f64, epsilon0: f64) -> Self {
        let sum_qprime = q_prime.iter().sum();
        let group_sums = group_sums(&q_prime);
        Self { q_prime, sum_qprime, dist_q_centroid, epsilon0, group_sums, lut: None }
    }

    /// Attaches the lookup tables used by [`Kernel::Table`].
    pub fn with_lut(mut self) -> Self {
        self.lut = Some(QueryLut::build(&self.q_prime));
        self
    }

    pub fn q_prime(&self) -> &[f64] {
        &self.q_prime
    }

    pub fn sum_qprime(&self) -> f64 {
        self.sum_qprime
    }

    pub fn dist_q_centroid(&self) -> f64 {
        self.dist_q_centroid
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn lut(&self) -> Option<&QueryLut> {
        self.lut.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.q_prime.len()
    }

    pub(crate) fn group_sums(&self) -> &[[f64; 16]] {
        &self.group_sums
    }
}

/// `q' = P^-1 (q_r - c)/|q_r - c|`. A query sitting on the centroid gets `q' = 0`.
pub fn preprocess_query(q_r: &[f32], c: &[f32], rotator: &RandomRotator, epsilon0: f64) -> Result<QueryContext> {
    let dim = rotator.dim();
    check_len("query", dim, q_r.len())?;
    check_len("centroid", dim, c.len())?;
    let (unit, dist) = normalized_residual(q_r, c);
    let q_prime = match unit {
        Some(u) => rotator.apply_inverse(&u)?,
        None => vec![0.0; dim],
    };
    Ok(QueryContext::from_rotated(q_prime, dist, epsilon0))
}

/// Query side of the reduced-dimension path: project, then normalize the image.
pub fn preprocess_query_reduced(q_r: &[f32], c: &[f32], rd: &ReducedRotator, epsilon0: f64) -> Result<QueryContext> {
    check_len("query", rd.in_dim(), q_r.len())?;
    check_len("centroid", rd.in_dim(), c.len())?;
    let (unit, dist) = normalized_residual(q_r, c);
    let mut q_prime = match unit {
        Some(u) => rd.project(&u)?,
        None => vec![0.0; rd.out_dim()],
    };
    let n = q_prime.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        q_prime.iter_mut().for_each(|x| *x /= n);
    }
    Ok(QueryContext::from_rotated(q_prime, dist, epsilon0))
}

fn normalized_residual(v: &[f32], c: &[f32]) -> (Option<Vec<f64>>, f64) {
    let diff: Vec<f64> = v.iter().zip(c).map(|(&a, &b)| a as f64 - b as f64).collect();
    let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        (None, 0.0)
    } else {
        (Some(diff.into_iter().map(|x| x / norm).collect()), norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithBound {
    pub est_sqdist: f64,
    /// `est_sqdist` minus the bound term; equal to it for final estimates.
    pub lower_bound: f64,
    pub stage: Stage,
}

/// `<q', x_b>`: per 4-dimension group, the set coordinates are summed in
/// ascending order, and group sums are then added in ascending group order.
pub fn stage1_ip(msb_plane: &[u64], qc: &QueryContext) -> f64 {
    let q = &qc.q_prime;
    let mut sum = 0.0f64;
    for (g, chunk) in q.chunks(4).enumerate() {
        let nib = msb_plane[g / 16] >> (4 * (g % 16)) & 0xf;
        let mut part = 0.0f64;
        for (b, &x) in chunk.iter().enumerate() {
            if nib >> b & 1 == 1 {
                part += x;
            }
        }
        sum += part;
    }
    sum
}

/// Stage-1 estimate from a precomputed `<q', x_b>`.
///
/// `ip_slack` is an absolute bound on how far `ip_b` may be from the exact
/// value (non-zero for the lookup-table kernel); it widens the lower bound.
pub fn estimate_stage1(factors: &Factors, ip_b: f64, ip_slack: f64, qc: &QueryContext) -> EstimateWithBound {
    let dq = qc.dist_q_centroid;
    if factors.degenerate {
        let est = dq * dq;
        return EstimateWithBound { est_sqdist: est, lower_bound: est, stage: Stage::One };
    }
    let inv_sqrt_d = 1.0 / (qc.dim() as f64).sqrt();
    let ip_q_obar0 = (2.0 * ip_b - qc.sum_qprime) * inv_sqrt_d;
    let est_ip = ip_q_obar0 * factors.f_rescale_1bit;
    let bound = if factors.f_error == 0.0 { 0.0 } else { factors.f_error * qc.epsilon0 }
        + 2.0 * ip_slack * inv_sqrt_d * factors.f_rescale_1bit;
    let d = factors.dist_to_centroid;
    let base = d * d + dq * dq;
    let cross = 2.0 * d * dq;
    let est = base - cross * est_ip;
    let lower_bound = if cross == 0.0 { est } else { base - cross * (est_ip + bound) };
    EstimateWithBound { est_sqdist: est, lower_bound, stage: Stage::One }
}

/// Stage-2 estimate; `ip_b` must be the exact `<q', y_0>` of this vector.
pub fn estimate_stage2(
    factors: &Factors,
    rest_planes: &[u8],
    bits: u8,
    ip_b: f64,
    qc: &QueryContext,
) -> Result<EstimateWithBound> {
    if bits < 2 {
        return Err(Error::InvalidState("a 1-bit code has no stage-2 planes".into()));
    }
    let dq = qc.dist_q_centroid;
    if factors.degenerate {
        let est = dq * dq;
        return Ok(EstimateWithBound { est_sqdist: est, lower_bound: est, stage: Stage::Two });
    }
    let ip_last = rest_ip(rest_planes, bits - 1, &qc.q_prime);
    let ip_u = (1u32 << (bits - 1)) as f64 * ip_b + ip_last;
    let shift = ((1u32 << bits) - 1) as f64 / 2.0;
    let est_ip = (ip_u - shift * qc.sum_qprime) * factors.f_rescale;
    let d = factors.dist_to_centroid;
    let est = d * d + dq * dq - 2.0 * d * dq * est_ip;
    Ok(EstimateWithBound { est_sqdist: est, lower_bound: est, stage: Stage::Two })
}

/// `<y_last, q'>` by direct traversal of the packed remainder planes.
pub fn rest_ip(rest_planes: &[u8], width: u8, q_prime: &[f64]) -> f64 {
    match width {
        0 => 0.0,
        8 => q_prime.iter().zip(rest_planes).map(|(&q, &b)| q * b as f64).sum(),
        4 => {
            let mut sum = 0.0;
            for (pair, &b) in q_prime.chunks(2).zip(rest_planes) {
                sum += pair[0] * (b & 0x0f) as f64;
                if let Some(&q1) = pair.get(1) {
                    sum += q1 * (b >> 4) as f64;
                }
            }
            sum
        }
        _ => q_prime.iter().enumerate().map(|(i, &q)| q * read_field(rest_planes, i, width) as f64).sum(),
    }
}

pub fn stage1_estimate(qv: &QuantizedVector, qc: &QueryContext) -> EstimateWithBound {
    let ip_b = stage1_ip(qv.code.msb_plane(), qc);
    estimate_stage1(&qv.factors, ip_b, 0.0, qc)
}

pub fn stage2_estimate(qv: &QuantizedVector, qc: &QueryContext, stage1_ip_value: f64) -> Result<EstimateWithBound> {
    estimate_stage2(&qv.factors, qv.code.rest_planes(), qv.bits(), stage1_ip_value, qc)
}

/// Best available estimate: stage 2 when the code has more than one bit.
pub fn full_estimate(qv: &QuantizedVector, qc: &QueryContext) -> Result<EstimateWithBound> {
    let ip_b = stage1_ip(qv.code.msb_plane(), qc);
    if qv.bits() == 1 {
        Ok(estimate_stage1(&qv.factors, ip_b, 0.0, qc))
    } else {
        estimate_stage2(&qv.factors, qv.code.rest_planes(), qv.bits(), ip_b, qc)
    }
}

/// Unbiased estimate of `<o, q>` (unit vectors) from the full code.
pub fn estimate_inner_product(qv: &QuantizedVector, qc: &QueryContext) -> f64 {
    let ip_b = stage1_ip(qv.code.msb_plane(), qc);
    let bits = qv.bits();
    if bits == 1 {
        let inv_sqrt_d = 1.0 / (qc.dim() as f64).sqrt();
        return (2.0 * ip_b - qc.sum_qprime) * inv_sqrt_d * qv.factors.f_rescale_1bit;
    }
    let ip_last = rest_ip(qv.code.rest_planes(), bits - 1, &qc.q_prime);
    let ip_u = (1u32 << (bits - 1)) as f64 * ip_b + ip_last;
    let shift = ((1u32 << bits) - 1) as f64 / 2.0;
    (ip_u - shift * qc.sum_qprime) * qv.factors.f_rescale
}
