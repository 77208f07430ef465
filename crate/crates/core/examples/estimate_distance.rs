//! Two-stage distance estimation for one query against a handful of vectors.
//!
//! `cargo run --example estimate_distance`

use xrbq::estimator::{full_estimate, preprocess_query, stage1_estimate};
use xrbq::eval::{exact_sqdist, synth_blobs, synth_queries, SynthParams};
use xrbq::quantizer::encode_vector;
use xrbq::rotator::RandomRotator;

fn main() -> xrbq::Result<()> {
    let p = SynthParams { n: 8, dim: 128, clusters: 1, separation: 0.0, seed: 3 };
    let data = synth_blobs(&p)?.data;
    let q = synth_queries(&p, 1)?;
    let c = data.centroid();
    let rotator = RandomRotator::sample(data.dim(), 3)?;
    let qc = preprocess_query(q.row(0), &c, &rotator, 1.9)?;

    println!("id  true      stage-1 (lower bound)    stage-2 (B=5)");
    for (i, row) in data.rows().enumerate() {
        let qv = encode_vector(row, &c, &rotator, 5)?;
        let s1 = stage1_estimate(&qv, &qc);
        let s2 = full_estimate(&qv, &qc)?;
        println!(
            "{i:>2}  {:>8.3}  {:>8.3} ({:>8.3})    {:>8.3}",
            exact_sqdist(q.row(0), row),
            s1.est_sqdist,
            s1.lower_bound,
            s2.est_sqdist
        );
    }
    Ok(())
}
