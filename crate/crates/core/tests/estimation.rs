//! Monte Carlo properties of the rotator, the quantizer and both estimator stages.

use proptest::prelude::*;
use xrbq::estimator::{full_estimate, preprocess_query, stage1_estimate, stage1_ip, stage2_estimate};
use xrbq::eval::{self, exact_sqdist, SynthParams};
use xrbq::quantizer::{encode_vector, QuantizationCode};
use xrbq::rotator::{RandomRotator, ReducedRotator};

fn gaussian(n: usize, dim: usize, seed: u64) -> xrbq::dataset::VectorSet {
    eval::synth_blobs(&SynthParams { n, dim, clusters: 1, separation: 0.0, seed }).unwrap().data
}

#[test]
fn jl_scaling_of_reduced_projection() {
    let (big, small) = (128usize, 32usize);
    let rd = ReducedRotator::sample(big, small, 5).unwrap();
    let data = gaussian(10_000, big, 5);
    let mut total = 0.0;
    for row in data.rows() {
        let v: Vec<f64> = row.iter().map(|&x| x as f64).collect();
        let img = rd.project(&v).unwrap();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        total += (big as f64 / small as f64) * img.iter().map(|x| x * x).sum::<f64>() / n2;
    }
    let mean = total / data.len() as f64;
    assert!((0.95..=1.05).contains(&mean), "mean scaled norm ratio {mean}");
}

#[test]
fn forward_after_inverse_is_identity() {
    let r = RandomRotator::sample(96, 3).unwrap();
    let data = gaussian(50, 96, 3);
    for row in data.rows() {
        let v: Vec<f64> = row.iter().map(|&x| x as f64).collect();
        let back = r.apply_forward(&r.apply_inverse(&v).unwrap()).unwrap();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err: f64 = v.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / n < 1e-5);
    }
}

/// Bit-by-bit packer written independently of the library layout code.
fn naive_unpack(code: &QuantizationCode) -> Vec<u16> {
    let bits = code.bits();
    let width = (bits - 1) as usize;
    let rest = code.rest_planes();
    (0..code.dim())
        .map(|i| {
            let msb = (code.msb_plane()[i / 64] >> (i % 64)) & 1;
            let mut low = 0u16;
            for b in 0..width {
                let pos = i * width + b;
                low |= (((rest[pos / 8] >> (pos % 8)) & 1) as u16) << b;
            }
            ((msb as u16) << width) | low
        })
        .collect()
}

#[test]
fn pack_code_examples() {
    let c = QuantizationCode::pack(&[3, 0, 2, 1], 2).unwrap();
    assert_eq!(c.msb_plane()[0] & 0xf, 0b0101);
    assert_eq!((0..4).map(|i| c.last(i)).collect::<Vec<_>>(), vec![1, 0, 0, 1]);
    let c = QuantizationCode::pack(&[1, 0, 1, 1], 1).unwrap();
    assert_eq!(c.msb_plane()[0], 0b1101);
    assert!(c.rest_planes().iter().all(|&b| b == 0));
    assert!(QuantizationCode::pack(&[4], 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pack_matches_independent_unpacker(bits in 3u8..=9, raw in prop::collection::vec(any::<u16>(), 1..300)) {
        let raw: Vec<u16> = raw.into_iter().map(|v| v % (1u16 << bits)).collect();
        let code = QuantizationCode::pack(&raw, bits).unwrap();
        prop_assert_eq!(naive_unpack(&code), raw.clone());
        prop_assert_eq!(code.unpack(), raw);
    }

    #[test]
    fn stage2_from_cached_ip_matches_full(seed in any::<u64>(), bits in 2u8..=6) {
        let dim = 64;
        let r = RandomRotator::sample(dim, seed).unwrap();
        let data = gaussian(2, dim, seed);
        let c = vec![0.0f32; dim];
        let qv = encode_vector(data.row(0), &c, &r, bits).unwrap();
        let qc = preprocess_query(data.row(1), &c, &r, 1.9).unwrap();
        let ip = stage1_ip(qv.code.msb_plane(), &qc);
        let a = stage2_estimate(&qv, &qc, ip).unwrap().est_sqdist;
        let b = full_estimate(&qv, &qc).unwrap().est_sqdist;
        prop_assert_eq!(a, b);
    }
}

/// Centered Gaussian pairs: data rows against query rows, global origin as centroid.
struct Pairs {
    data: Vec<xrbq::quantizer::QuantizedVector>,
    truth: Vec<Vec<f64>>,
    contexts: Vec<xrbq::estimator::QueryContext>,
    true_ip: Vec<Vec<f64>>,
}

fn pairs(n: usize, q: usize, dim: usize, bits: u8, seed: u64) -> Pairs {
    let r = RandomRotator::sample(dim, seed).unwrap();
    let data = gaussian(n, dim, seed);
    let queries = gaussian(q, dim, seed ^ 0x9e37);
    let c = vec![0.0f32; dim];
    let unit = |v: &[f32]| {
        let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        v.iter().map(|&x| x as f64 / n).collect::<Vec<f64>>()
    };
    let du: Vec<Vec<f64>> = data.rows().map(unit).collect();
    Pairs {
        data: data.rows().map(|row| encode_vector(row, &c, &r, bits).unwrap()).collect(),
        truth: queries.rows().map(|qr| data.rows().map(|o| exact_sqdist(qr, o)).collect()).collect(),
        contexts: queries.rows().map(|qr| preprocess_query(qr, &c, &r, 1.9).unwrap()).collect(),
        true_ip: queries
            .rows()
            .map(|qr| {
                let qu = unit(qr);
                du.iter().map(|o| o.iter().zip(&qu).map(|(a, b)| a * b).sum()).collect()
            })
            .collect(),
    }
}

#[test]
fn stage1_is_unbiased_over_a_million_pairs() {
    let p = pairs(10_000, 100, 64, 1, 21);
    let (mut sum, mut sum2, mut n) = (0.0f64, 0.0f64, 0.0f64);
    for (qc, truth) in p.contexts.iter().zip(&p.truth) {
        for (qv, &t) in p.data.iter().zip(truth) {
            let e = stage1_estimate(qv, qc).est_sqdist - t;
            sum += e;
            sum2 += e * e;
            n += 1.0;
        }
    }
    let mean = sum / n;
    let se = ((sum2 / n - mean * mean) / n).sqrt();
    assert!(n >= 1e6);
    assert!(mean.abs() <= 3.0 * se, "mean signed error {mean}, standard error {se}");
}

fn violation_rate(p: &Pairs, epsilon0: f64) -> f64 {
    let (mut viol, mut n) = (0usize, 0usize);
    for (qc, ips) in p.contexts.iter().zip(&p.true_ip) {
        for (qv, &t) in p.data.iter().zip(ips) {
            if (eval_ip(qv, qc) - t).abs() > qv.factors.f_error * epsilon0 {
                viol += 1;
            }
            n += 1;
        }
    }
    viol as f64 / n as f64
}

#[test]
fn stage1_bound_violations_follow_the_normal_tail() {
    let p = pairs(2000, 50, 128, 1, 22);
    // Two-sided standard normal tails at 1.9 and 2.6.
    let at_19 = violation_rate(&p, 1.9);
    assert!((at_19 - 0.0574).abs() < 0.005, "rate at 1.9: {at_19}");
    let at_26 = violation_rate(&p, 2.6);
    assert!(at_26 < 0.01, "rate at 2.6: {at_26}");
}

/// Stage-1 inner product estimate recovered from the distance estimate.
fn eval_ip(qv: &xrbq::quantizer::QuantizedVector, qc: &xrbq::estimator::QueryContext) -> f64 {
    let e = stage1_estimate(qv, qc).est_sqdist;
    let (a, b) = (qv.factors.dist_to_centroid, qc.dist_q_centroid());
    (a * a + b * b - e) / (2.0 * a * b)
}

#[test]
fn stage2_beats_stage1_for_every_width() {
    for bits in 2u8..=9 {
        let p = pairs(1000, 100, 64, bits, 23 + bits as u64);
        let (mut e1, mut e2) = (0.0f64, 0.0f64);
        for (qc, truth) in p.contexts.iter().zip(&p.truth) {
            for (qv, &t) in p.data.iter().zip(truth) {
                e1 += (stage1_estimate(qv, qc).est_sqdist - t).abs() / t;
                e2 += (full_estimate(qv, qc).unwrap().est_sqdist - t).abs() / t;
            }
        }
        assert!(e2 < e1, "B={bits}: stage-2 total {e2} vs stage-1 {e1}");
    }
}

#[test]
fn calibration_quantiles_shrink_with_bits_and_dimension() {
    let lo = eval::calibrate(256, &[1, 2, 3, 4, 5, 6, 7, 8], 100_000, 9).unwrap();
    for w in lo.rows.windows(2) {
        assert!(w[1].quantile < w[0].quantile, "B={} -> {}", w[0].bits, w[1].bits);
    }
    let hi = eval::calibrate(1024, &[2, 4], 100_000, 9).unwrap();
    for (a, b) in lo.rows.iter().filter(|r| r.bits == 2 || r.bits == 4).zip(&hi.rows) {
        let ratio = (b.quantile / a.quantile) / (256.0f64 / 1024.0).sqrt();
        assert!((0.8..=1.2).contains(&ratio), "B={}: scaling ratio {ratio}", a.bits);
    }
}
