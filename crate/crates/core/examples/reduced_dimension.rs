//! One-bit codes after projecting to fewer dimensions, against full-dimension one-bit codes.
//!
//! `cargo run --release --example reduced_dimension`

use xrbq::estimator::{full_estimate, preprocess_query, preprocess_query_reduced};
use xrbq::eval::{exact_sqdist, synth_blobs, synth_queries, SynthParams};
use xrbq::quantizer::{encode_vector, reduced_dim_encode};
use xrbq::rotator::{RandomRotator, ReducedRotator};

fn main() -> xrbq::Result<()> {
    let dim = 128;
    let p = SynthParams { n: 500, dim, clusters: 1, separation: 0.0, seed: 6 };
    let data = synth_blobs(&p)?.data;
    let queries = synth_queries(&p, 20)?;
    let c = data.centroid();
    let full = RandomRotator::sample(dim, 6)?;
    let full_codes: Vec<_> = data.rows().map(|r| encode_vector(r, &c, &full, 1)).collect::<Result<_, _>>()?;

    println!("d     mean relative error");
    for d in [16, 32, 64, 128] {
        let proj = ReducedRotator::sample(dim, d, 6)?;
        let codes: Vec<_> = data.rows().map(|r| reduced_dim_encode(r, &c, &proj)).collect::<Result<_, _>>()?;
        let (mut err, mut n) = (0.0, 0);
        for q in queries.rows() {
            let qc = preprocess_query_reduced(q, &c, &proj, 1.9)?;
            for (code, row) in codes.iter().zip(data.rows()) {
                let t = exact_sqdist(q, row);
                err += (full_estimate(code, &qc)?.est_sqdist - t).abs() / t;
                n += 1;
            }
        }
        println!("{d:<5} {:.4}", err / n as f64);
    }
    let (mut err, mut n) = (0.0, 0);
    for q in queries.rows() {
        let qc = preprocess_query(q, &c, &full, 1.9)?;
        for (code, row) in full_codes.iter().zip(data.rows()) {
            let t = exact_sqdist(q, row);
            err += (full_estimate(code, &qc)?.est_sqdist - t).abs() / t;
            n += 1;
        }
    }
    println!("full  {:.4}  (rotation, no projection)", err / n as f64);
    Ok(())
}
