//! Write and read fvecs/ivecs files and compute exact ground truth.
//!
//! `cargo run --example vector_files`

use xrbq::dataset::{read_fvecs, read_ivecs, write_fvecs, write_ivecs};
use xrbq::eval::{ground_truth, synth_blobs, synth_queries, SynthParams};

fn main() -> xrbq::Result<()> {
    let p = SynthParams { n: 500, dim: 24, clusters: 5, separation: 2.0, seed: 4 };
    let dir = std::env::temp_dir();
    let (base, query, gt_path) = (dir.join("xrbq-base.fvecs"), dir.join("xrbq-query.fvecs"), dir.join("xrbq-gt.ivecs"));
    write_fvecs(&base, &synth_blobs(&p)?.data)?;
    write_fvecs(&query, &synth_queries(&p, 5)?)?;

    let data = read_fvecs(&base)?;
    let queries = read_fvecs(&query)?;
    let gt = ground_truth(&data, &queries, 3)?;
    let lists: Vec<Vec<i32>> = gt.iter().map(|l| l.iter().map(|&i| i as i32).collect()).collect();
    write_ivecs(&gt_path, &lists)?;
    for (i, l) in read_ivecs(&gt_path)?.iter().enumerate() {
        println!("query {i}: nearest {l:?}");
    }
    for f in [base, query, gt_path] {
        std::fs::remove_file(f)?;
    }
    Ok(())
}
