//! Evaluation oracles, baseline quantizers and vector file IO.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xrbq::baselines::{lvq_decode, lvq_encode, SqModel};
use xrbq::dataset::{read_fvecs, read_ivecs, write_fvecs, write_ivecs, VectorSet};
use xrbq::eval::{self, ErrorMethod, SynthParams, MAX_ERROR_PAIRS};

fn gaussian(n: usize, dim: usize, seed: u64) -> VectorSet {
    eval::synth_blobs(&SynthParams { n, dim, clusters: 1, separation: 0.0, seed }).unwrap().data
}

fn scaled(set: &VectorSet, s: f32) -> VectorSet {
    VectorSet::new(set.dim(), set.as_slice().iter().map(|x| x * s).collect()).unwrap()
}

/// Plain O(N*D) scan per query, sorted by (distance, id).
fn naive_knn(data: &VectorSet, q: &[f32], k: usize) -> Vec<u64> {
    let mut all: Vec<(f64, u64)> = data
        .rows()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum(), i as u64))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|p| p.1).collect()
}

#[test]
fn ground_truth_agrees_with_naive_scan() {
    let data = gaussian(1000, 64, 1);
    let queries = gaussian(50, 64, 2);
    let gt = eval::ground_truth(&data, &queries, 20).unwrap();
    for (q, row) in queries.rows().zip(&gt) {
        assert_eq!(row, &naive_knn(&data, q, 20));
    }
}

#[test]
fn ground_truth_edge_cases() {
    let data = gaussian(40, 8, 3);
    let queries = VectorSet::from_rows(&[data.row(17).to_vec()]).unwrap();
    assert_eq!(eval::ground_truth(&data, &queries, 1).unwrap()[0], vec![17]);
    let all = eval::ground_truth(&data, &queries, 100).unwrap();
    assert_eq!(all[0].len(), 40);
    let d: Vec<f64> = all[0].iter().map(|&i| eval::exact_sqdist(data.row(17), data.row(i as usize))).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn five_point_recall() {
    let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![i as f32, 0.0]).collect();
    let data = VectorSet::from_rows(&rows).unwrap();
    let queries = VectorSet::from_rows(&[vec![0.2f32, 0.0]]).unwrap();
    let truth = eval::ground_truth(&data, &queries, 2).unwrap();
    assert_eq!(truth[0], vec![0, 1]);
    assert_eq!(eval::recall_at_k(&[0, 3], &truth[0], 2), 0.5);
    assert_eq!(eval::recall_at_k(&[1, 0], &truth[0], 2), 1.0);
    assert_eq!(eval::recall_at_k(&[3, 4], &truth[0], 2), 0.0);
    assert_eq!(eval::distance_ratio(&data, queries.row(0), &truth[0], &truth[0]), 1.0);
}

#[test]
fn exact_baseline_gives_zero_error() {
    // Two distinct integer values per vector, plus each vector's negation so the
    // global centroid is exactly zero: one-bit LVQ then reconstructs exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    for _ in 0..100 {
        let lo = rng.random_range(-5i32..0) as f32;
        let hi = rng.random_range(1i32..6) as f32;
        let row: Vec<f32> = (0..16)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == 1 {
                    hi
                } else if rng.random() {
                    lo
                } else {
                    hi
                }
            })
            .collect();
        rows.push(row.iter().map(|x| -x).collect::<Vec<f32>>());
        rows.push(row);
    }
    let data = VectorSet::from_rows(&rows).unwrap();
    let queries = gaussian(20, 16, 5);
    let stats = eval::eval_error(&data, &queries, ErrorMethod::Lvq, 1, MAX_ERROR_PAIRS, 0).unwrap();
    assert_eq!(stats.pairs, 4000);
    assert_eq!((stats.mean_relative, stats.max_relative), (0.0, 0.0));
}

#[test]
fn baselines_are_scale_equivariant() {
    let data = gaussian(200, 32, 6);
    let queries = gaussian(10, 32, 7);
    for method in [ErrorMethod::Sq, ErrorMethod::Lvq] {
        for bits in [2u8, 5, 8] {
            let base = eval::pair_estimates(&data, &queries, method, bits, MAX_ERROR_PAIRS, 0).unwrap();
            let twice =
                eval::pair_estimates(&scaled(&data, 2.0), &scaled(&queries, 2.0), method, bits, MAX_ERROR_PAIRS, 0)
                    .unwrap();
            for (a, b) in base.iter().zip(&twice) {
                assert_eq!(b.est_sqdist, 4.0 * a.est_sqdist);
            }
            let thrice =
                eval::pair_estimates(&scaled(&data, 3.0), &scaled(&queries, 3.0), method, bits, MAX_ERROR_PAIRS, 0)
                    .unwrap();
            for (a, b) in base.iter().zip(&thrice) {
                assert!((b.est_sqdist - 9.0 * a.est_sqdist).abs() <= 1e-5 * b.est_sqdist);
            }
        }
    }
}

#[test]
fn lvq_is_no_worse_than_sq_on_gaussian_data() {
    let data = gaussian(1000, 128, 8);
    let queries = gaussian(50, 128, 9);
    for bits in 1..=8u8 {
        let sq = eval::eval_error(&data, &queries, ErrorMethod::Sq, bits, MAX_ERROR_PAIRS, 0).unwrap();
        let lvq = eval::eval_error(&data, &queries, ErrorMethod::Lvq, bits, MAX_ERROR_PAIRS, 0).unwrap();
        assert!(lvq.mean_relative <= sq.mean_relative, "B={bits}: lvq {} sq {}", lvq.mean_relative, sq.mean_relative);
    }
}

#[test]
fn pair_sampling_respects_the_cap_and_seed() {
    let data = gaussian(300, 16, 10);
    let queries = gaussian(40, 16, 11);
    let a = eval::pair_estimates(&data, &queries, ErrorMethod::Xrabitq, 3, 1000, 1).unwrap();
    let b = eval::pair_estimates(&data, &queries, ErrorMethod::Xrabitq, 3, 1000, 1).unwrap();
    let c = eval::pair_estimates(&data, &queries, ErrorMethod::Xrabitq, 3, 1000, 2).unwrap();
    assert_eq!(a.len(), 1000);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #[test]
    fn sq_and_lvq_round_trip_within_half_step(
        v in prop::collection::vec(-100.0f32..100.0, 2..40),
        bits in 1u8..=8,
    ) {
        let set = VectorSet::from_rows(std::slice::from_ref(&v)).unwrap();
        let model = SqModel::fit(&set, bits).unwrap();
        let back = model.decode(&model.encode(&v).unwrap()).unwrap();
        let steps = ((1u32 << bits) - 1) as f64;
        let half = (model.v_hi - model.v_lo) / (2.0 * steps);
        for (x, y) in v.iter().zip(&back) {
            prop_assert!((*x as f64 - *y as f64).abs() <= half * (1.0 + 1e-6) + 1e-5);
        }
        let code = lvq_encode(&v, bits).unwrap();
        prop_assert!(code.v_lo <= code.v_hi);
        let back = lvq_decode(&code);
        let half = (code.v_hi - code.v_lo) / (2.0 * steps);
        for (x, y) in v.iter().zip(&back) {
            prop_assert!((*x as f64 - *y as f64).abs() <= half * (1.0 + 1e-6) + 1e-5);
        }
    }
}

#[test]
fn vector_files_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian(100, 37, 12);
    let (a, b) = (dir.path().join("a.fvecs"), dir.path().join("b.fvecs"));
    write_fvecs(&a, &data).unwrap();
    let back = read_fvecs(&a).unwrap();
    assert_eq!(back, data);
    write_fvecs(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::metadata(&a).unwrap().len(), 100 * (4 + 37 * 4));

    let lists: Vec<Vec<i32>> = (0..10).map(|i| (0..5).map(|j| i * 100 + j).collect()).collect();
    let ivecs = dir.path().join("gt.ivecs");
    write_ivecs(&ivecs, &lists).unwrap();
    assert_eq!(read_ivecs(&ivecs).unwrap(), lists);

    let mut bytes = std::fs::read(&a).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&a, &bytes).unwrap();
    assert!(matches!(read_fvecs(&a), Err(xrbq::Error::Parse { .. })));
}
