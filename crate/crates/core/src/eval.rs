//! Ground truth, search metrics, estimation-error studies, calibration of the
//! inner-product error constant, and synthetic data.

use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{lvq_decode, lvq_encode, SqModel};
use crate::dataset::{pad_vector, padded_dim, VectorSet};
use crate::error::{check_len, invalid, Result};
use crate::estimator::{full_estimate, preprocess_query};
use crate::ivf::{IvfIndex, SearchParams, SearchStats};
use crate::quantizer::{encode_vector, grid_value, quantize, QuantizedVector, DEFAULT_EPSILON0};
use crate::rng::{self, Stream};
use crate::rotator::RandomRotator;

/// Squared distance with `f64` accumulation over eight lanes.
pub fn exact_sqdist(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] as f64 - y[k] as f64;
            acc[k] += d * d;
        }
    }
    acc.iter().sum::<f64>() + tail
}

struct Scored(f64, u64);

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Exact K nearest rows of `data` for every query, nearest first, ties by
/// smaller row index. `K > N` yields all `N` rows.
pub fn ground_truth(data: &VectorSet, queries: &VectorSet, k: usize) -> Result<Vec<Vec<u64>>> {
    data.require_non_empty("data")?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if !queries.is_empty() {
        check_len("query dimension", data.dim(), queries.dim())?;
    }
    let k = k.min(data.len());
    Ok((0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut heap = BinaryHeap::with_capacity(k + 1);
            for (i, row) in data.rows().enumerate() {
                let s = Scored(exact_sqdist(q, row), i as u64);
                if heap.len() < k {
                    heap.push(s);
                } else if s < *heap.peek().unwrap() {
                    *heap.peek_mut().unwrap() = s;
                }
            }
            heap.into_sorted_vec().into_iter().map(|s| s.1).collect()
        })
        .collect())
}

/// `|retrieved ∩ truth[..k]| / k`.
pub fn recall_at_k(retrieved: &[u64], truth: &[u64], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let want: HashSet<u64> = truth.iter().take(k).copied().collect();
    retrieved.iter().take(k).filter(|id| want.contains(id)).count() as f64 / k as f64
}

/// Mean over ranks of `dist(retrieved_j) / dist(truth_j)` (Euclidean, 0/0 = 1).
/// Ids are row indices into `data`.
pub fn distance_ratio(data: &VectorSet, q: &[f32], retrieved: &[u64], truth: &[u64]) -> f64 {
    let n = retrieved.len().min(truth.len());
    if n == 0 {
        return 1.0;
    }
    let sum: f64 = (0..n)
        .map(|j| {
            let r = exact_sqdist(q, data.row(retrieved[j] as usize)).sqrt();
            let t = exact_sqdist(q, data.row(truth[j] as usize)).sqrt();
            if t == 0.0 && r == 0.0 {
                1.0
            } else {
                r / t
            }
        })
        .sum();
    sum / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub nprobe: usize,
    pub queries: usize,
    pub recall: f64,
    /// Present when raw data was supplied.
    pub avg_distance_ratio: Option<f64>,
    /// Single-threaded queries per second, including query preprocessing.
    /// `None` when queries ran on several threads.
    pub qps: Option<f64>,
    pub stage1: u64,
    pub stage2: u64,
    pub pruned: u64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "k,nprobe,queries,recall,avg_distance_ratio,qps,stage1,stage2,pruned";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{},{},{}",
            self.k,
            self.nprobe,
            self.queries,
            self.recall,
            self.avg_distance_ratio.map_or(String::new(), |r| format!("{r:.6}")),
            self.qps.map_or(String::new(), |q| format!("{q:.1}")),
            self.stage1,
            self.stage2,
            self.pruned
        )
    }
}

/// Runs every query once, sequentially, and scores the results against `gt`.
///
/// `data` (rows indexed by id) enables the distance ratio.
pub fn eval_search(
    index: &IvfIndex,
    queries: &VectorSet,
    gt: &[Vec<u64>],
    params: &SearchParams,
    data: Option<&VectorSet>,
) -> Result<EvalReport> {
    eval_search_threads(index, queries, gt, params, data, 1)
}

/// As [`eval_search`]; with `threads > 1` queries run concurrently and no QPS is reported.
pub fn eval_search_threads(
    index: &IvfIndex,
    queries: &VectorSet,
    gt: &[Vec<u64>],
    params: &SearchParams,
    data: Option<&VectorSet>,
    threads: usize,
) -> Result<EvalReport> {
    if queries.len() != gt.len() {
        return Err(invalid(format!("{} queries but {} ground-truth lists", queries.len(), gt.len())));
    }
    queries.require_non_empty("queries")?;
    let need = params.k.min(index.len());
    if let Some(short) = gt.iter().position(|t| t.len() < need) {
        return Err(invalid(format!("ground-truth list {short} is shallower than k = {}", params.k)));
    }
    let (results, qps) = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Internal(e.to_string()))?;
        let results = pool.install(|| {
            (0..queries.len()).into_par_iter().map(|i| index.search(queries.row(i), params)).collect::<Result<Vec<_>>>()
        })?;
        (results, None)
    } else {
        let start = Instant::now();
        let results = queries.rows().map(|q| index.search(q, params)).collect::<Result<Vec<_>>>()?;
        let elapsed = start.elapsed().as_secs_f64();
        let nq = queries.len() as f64;
        (results, Some(if elapsed > 0.0 { nq / elapsed } else { f64::INFINITY }))
    };

    let mut stats = SearchStats::default();
    let mut recall = 0.0;
    let mut ratio = 0.0;
    for (qi, r) in results.iter().enumerate() {
        stats.accumulate(&r.stats);
        recall += recall_at_k(&r.ids, &gt[qi], need);
        if let Some(d) = data {
            ratio += distance_ratio(d, queries.row(qi), &r.ids, &gt[qi][..need]);
        }
    }
    let nq = queries.len() as f64;
    Ok(EvalReport {
        k: params.k,
        nprobe: params.nprobe,
        queries: queries.len(),
        recall: recall / nq,
        avg_distance_ratio: data.map(|_| ratio / nq),
        qps,
        stage1: stats.stage1,
        stage2: stats.stage2,
        pruned: stats.pruned,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMethod {
    Xrabitq,
    XrabitqPaddedReference,
    Sq,
    Lvq,
}

impl ErrorMethod {
    pub const ALL: [ErrorMethod; 4] = [Self::Xrabitq, Self::XrabitqPaddedReference, Self::Sq, Self::Lvq];

    pub fn name(self) -> &'static str {
        match self {
            Self::Xrabitq => "xrabitq",
            Self::XrabitqPaddedReference => "xrabitq-padded-reference",
            Self::Sq => "sq",
            Self::Lvq => "lvq",
        }
    }
}

impl fmt::Display for ErrorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            invalid(format!("unknown method {s:?} (expected xrabitq, xrabitq-padded-reference, sq or lvq)"))
        })
    }
}

/// Default cap on evaluated (query, data) pairs.
pub const MAX_ERROR_PAIRS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStats {
    pub method: ErrorMethod,
    pub bits: u8,
    pub pairs: usize,
    pub mean_relative: f64,
    pub max_relative: f64,
}

impl ErrorStats {
    pub const CSV_HEADER: &'static str = "method,bits,pairs,mean_relative,max_relative";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:.6e},{:.6e}", self.method, self.bits, self.pairs, self.mean_relative, self.max_relative)
    }
}

/// One (query, data) pair: exact and estimated squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub true_sqdist: f64,
    pub est_sqdist: f64,
}

enum Encoded {
    Codes { rotator: RandomRotator, centroid: Vec<f32>, dim: usize, codes: Vec<QuantizedVector> },
    Decoded(VectorSet),
}

fn center(v: &[f32], c: &[f32]) -> Vec<f32> {
    v.iter().zip(c).map(|(a, b)| a - b).collect()
}

fn encode_for(data: &VectorSet, method: ErrorMethod, bits: u8, seed: u64) -> Result<Encoded> {
    let centroid = data.centroid();
    Ok(match method {
        ErrorMethod::Xrabitq | ErrorMethod::XrabitqPaddedReference => {
            let (dim, code_bits) = match method {
                ErrorMethod::Xrabitq => (padded_dim(data.dim()), bits),
                _ => (padded_dim(bits as usize * data.dim()), 1),
            };
            let rotator = RandomRotator::sample(dim, seed)?;
            let centroid = pad_vector(&centroid, dim)?;
            let codes = (0..data.len())
                .into_par_iter()
                .map(|i| encode_vector(&pad_vector(data.row(i), dim)?, &centroid, &rotator, code_bits))
                .collect::<Result<Vec<_>>>()?;
            Encoded::Codes { rotator, centroid, dim, codes }
        }
        ErrorMethod::Sq => {
            let centered = VectorSet::from_rows(&data.rows().map(|r| center(r, &centroid)).collect::<Vec<_>>())?;
            let model = SqModel::fit(&centered, bits)?;
            let mut out = Vec::with_capacity(data.len() * data.dim());
            for r in centered.rows() {
                out.extend(model.decode(&model.encode(r)?)?);
            }
            Encoded::Decoded(VectorSet::new(data.dim(), out)?)
        }
        ErrorMethod::Lvq => {
            let mut out = Vec::with_capacity(data.len() * data.dim());
            for r in data.rows() {
                out.extend(lvq_decode(&lvq_encode(&center(r, &centroid), bits)?));
            }
            Encoded::Decoded(VectorSet::new(data.dim(), out)?)
        }
    })
}

/// Visits sampled (query, data) pairs in query-major order.
fn visit_pairs(
    data: &VectorSet,
    queries: &VectorSet,
    method: ErrorMethod,
    bits: u8,
    max_pairs: usize,
    seed: u64,
    mut visit: impl FnMut(PairSample),
) -> Result<usize> {
    data.require_non_empty("data")?;
    queries.require_non_empty("queries")?;
    check_len("query dimension", data.dim(), queries.dim())?;
    if max_pairs == 0 {
        return Err(invalid("max_pairs must be positive"));
    }
    let enc = encode_for(data, method, bits, seed)?;
    let n = data.len();
    let total = n.checked_mul(queries.len()).ok_or_else(|| invalid("pair count overflows"))?;
    let picks: Vec<usize> = if total <= max_pairs {
        (0..total).collect()
    } else {
        let mut rng = rng::stream(seed, Stream::Sampling);
        let mut v = index::sample(&mut rng, total, max_pairs).into_vec();
        v.sort_unstable();
        v
    };
    let centroid = data.centroid();
    let mut start = 0;
    while start < picks.len() {
        let qi = picks[start] / n;
        let end = start + picks[start..].partition_point(|&p| p / n == qi);
        let q = queries.row(qi);
        match &enc {
            Encoded::Codes { rotator, centroid: c, dim, codes } => {
                let qc = preprocess_query(&pad_vector(q, *dim)?, c, rotator, DEFAULT_EPSILON0)?;
                for &p in &picks[start..end] {
                    let i = p % n;
                    let est = full_estimate(&codes[i], &qc)?.est_sqdist;
                    visit(PairSample { true_sqdist: exact_sqdist(q, data.row(i)), est_sqdist: est });
                }
            }
            Encoded::Decoded(decoded) => {
                let qc = center(q, &centroid);
                for &p in &picks[start..end] {
                    let i = p % n;
                    let est = exact_sqdist(decoded.row(i), &qc);
                    visit(PairSample { true_sqdist: exact_sqdist(q, data.row(i)), est_sqdist: est });
                }
            }
        }
        start = end;
    }
    Ok(picks.len())
}

/// Exact and estimated squared distances over (at most `max_pairs`) sampled pairs.
pub fn pair_estimates(
    data: &VectorSet,
    queries: &VectorSet,
    method: ErrorMethod,
    bits: u8,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<PairSample>> {
    let mut out = Vec::new();
    visit_pairs(data, queries, method, bits, max_pairs, seed, |s| out.push(s))?;
    Ok(out)
}

/// Mean and max of `|est - true| / true` over sampled pairs, data centered on
/// the global centroid. Pairs at distance 0 are skipped.
pub fn eval_error(
    data: &VectorSet,
    queries: &VectorSet,
    method: ErrorMethod,
    bits: u8,
    max_pairs: usize,
    seed: u64,
) -> Result<ErrorStats> {
    let (mut sum, mut max, mut count) = (0.0f64, 0.0f64, 0usize);
    visit_pairs(data, queries, method, bits, max_pairs, seed, |s| {
        if s.true_sqdist > 0.0 {
            let rel = (s.est_sqdist - s.true_sqdist).abs() / s.true_sqdist;
            sum += rel;
            max = max.max(rel);
            count += 1;
        }
    })?;
    Ok(ErrorStats {
        method,
        bits,
        pairs: count,
        mean_relative: if count > 0 { sum / count as f64 } else { 0.0 },
        max_relative: max,
    })
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Constant of the empirical bound `|error| < c * 2^-B / sqrt(D)`.
pub const C_EPSILON: f64 = 5.75;
/// Queries paired with each sampled data vector during calibration.
const QUERIES_PER_VECTOR: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub bits: u8,
    /// 99.9% quantile of `|est <o,q> - <o,q>|`.
    pub quantile: f64,
    /// `C_EPSILON * 2^-B / sqrt(D)`.
    pub bound: f64,
    /// `quantile * 2^B * sqrt(D)`.
    pub c_eps: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub dim: usize,
    pub pairs: usize,
    pub seed: u64,
    pub rows: Vec<CalibrationRow>,
    /// Largest per-row `c_eps`.
    pub c_eps: f64,
}

impl Calibration {
    pub const CSV_HEADER: &'static str = "dim,bits,pairs,quantile_999,bound,c_eps,within_bound";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:.6e},{:.6e},{:.4},{}",
                    self.dim, r.bits, self.pairs, r.quantile, r.bound, r.c_eps, r.within_bound
                )
            })
            .collect()
    }

    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound)
    }
}

pub fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Measures the 99.9% quantile of the inner-product estimation error between
/// independent uniform unit vectors for each bit width in `bits`.
///
/// The rotation is folded into the sampling: a uniform unit vector stays
/// uniform under any fixed orthogonal map, so `o'` and `q'` are drawn directly.
/// Every `B` sees the same vector pairs.
pub fn calibrate(dim: usize, bits: &[u8], n_pairs: usize, seed: u64) -> Result<Calibration> {
    if n_pairs < 10_000 {
        return Err(invalid(format!("calibration needs at least 10000 pairs, got {n_pairs}")));
    }
    if dim == 0 || bits.is_empty() {
        return Err(invalid("calibration needs a positive dimension and at least one bit width"));
    }
    let vectors = n_pairs.div_ceil(QUERIES_PER_VECTOR);
    let mut master = rng::stream(seed, Stream::Calibration);
    let item_seeds: Vec<u64> = (0..vectors).map(|_| master.random()).collect();

    let per_item: Vec<Vec<Vec<f64>>> = item_seeds
        .par_iter()
        .enumerate()
        .map(|(v, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let o = random_unit(dim, &mut rng);
            let pairs_here = QUERIES_PER_VECTOR.min(n_pairs - v * QUERIES_PER_VECTOR);
            let qs: Vec<Vec<f64>> = (0..pairs_here).map(|_| random_unit(dim, &mut rng)).collect();
            let truth: Vec<f64> = qs.iter().map(|q| dot(&o, q)).collect();
            bits.iter()
                .map(|&b| {
                    let qz = quantize(&o, b)?;
                    let y: Vec<f64> = qz.code.iter().map(|&u| grid_value(u, b)).collect();
                    Ok(qs.iter().zip(&truth).map(|(q, t)| (dot(&y, q) / qz.ip_oy - t).abs()).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;

    let rows: Vec<CalibrationRow> = bits
        .iter()
        .enumerate()
        .map(|(bi, &b)| {
            let mut errs: Vec<f64> = per_item.iter().flat_map(|item| item[bi].iter().copied()).collect();
            errs.sort_by(f64::total_cmp);
            let at = ((0.999 * errs.len() as f64).ceil() as usize).clamp(1, errs.len()) - 1;
            let quantile = errs[at];
            let scale = (1u64 << b) as f64 * (dim as f64).sqrt();
            let bound = C_EPSILON / scale;
            CalibrationRow { bits: b, quantile, bound, c_eps: quantile * scale, within_bound: quantile < bound }
        })
        .collect();
    let c_eps = rows.iter().map(|r| r.c_eps).fold(0.0, f64::max);
    Ok(Calibration { dim, pairs: n_pairs, seed, rows, c_eps })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian blobs: `clusters` centers drawn from `N(0, separation^2 I)`,
/// points drawn as center + `N(0, I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub data: VectorSet,
    /// Blob of each row.
    pub labels: Vec<u32>,
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn blob_centers(p: &SynthParams) -> Result<(ChaCha8Rng, Vec<Vec<f64>>)> {
    if p.dim == 0 || p.clusters == 0 {
        return Err(invalid("synthetic data needs a positive dimension and cluster count"));
    }
    if !(p.separation >= 0.0 && p.separation.is_finite()) {
        return Err(invalid(format!("separation must be finite and non-negative, got {}", p.separation)));
    }
    let mut rng = rng::stream(p.seed, Stream::SynthData);
    let centers = (0..p.clusters).map(|_| (0..p.dim).map(|_| p.separation * gauss(&mut rng)).collect()).collect();
    Ok((rng, centers))
}

fn sample_points(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], n: usize) -> (VectorSet, Vec<u32>) {
    let dim = centers[0].len();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..centers.len());
        labels.push(c as u32);
        data.extend(centers[c].iter().map(|&m| (m + gauss(rng)) as f32));
    }
    (VectorSet::new(dim, data).unwrap(), labels)
}

pub fn synth_blobs(p: &SynthParams) -> Result<Synthetic> {
    let (mut rng, centers) = blob_centers(p)?;
    let (data, labels) = sample_points(&mut rng, &centers, p.n);
    Ok(Synthetic { data, labels })
}

/// Queries from the same blobs as [`synth_blobs`] but an independent stream,
/// so they never coincide with data rows by construction.
pub fn synth_queries(p: &SynthParams, n_queries: usize) -> Result<VectorSet> {
    let (_, centers) = blob_centers(p)?;
    let mut rng = rng::stream(p.seed, Stream::SynthQueries);
    Ok(sample_points(&mut rng, &centers, n_queries).0)
}
