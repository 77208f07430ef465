//! Build an IVF index over synthetic blobs, search it and measure recall.
//!
//! `cargo run --release --example ivf_search`

use xrbq::estimator::Kernel;
use xrbq::eval::{eval_search, ground_truth, synth_blobs, synth_queries, EvalReport, SynthParams};
use xrbq::ivf::{BuildParams, IvfIndex, SearchParams};

fn main() -> xrbq::Result<()> {
    let p = SynthParams { n: 20_000, dim: 96, clusters: 50, separation: 1.5, seed: 11 };
    let data = synth_blobs(&p)?.data;
    let queries = synth_queries(&p, 100)?;
    let gt = ground_truth(&data, &queries, 10)?;

    let index = IvfIndex::build(&data, None, &BuildParams { bits: 5, seed: 11, ..BuildParams::default() })?;
    println!("{} vectors in {} clusters, padded dim {}", index.len(), index.num_clusters(), index.dim());

    let hit = index.search(queries.row(0), &SearchParams::new(5, 8))?;
    println!("query 0 -> ids {:?}", hit.ids);
    println!("          est  {:.2?}", hit.est_sqdists);
    println!("          true {:?}", &gt[0][..5]);

    println!("{}", EvalReport::CSV_HEADER);
    for nprobe in [1, 4, 16, 64] {
        println!("{}", eval_search(&index, &queries, &gt, &SearchParams::new(10, nprobe), Some(&data))?.csv_row());
    }
    let table = SearchParams::new(10, 16).with_kernel(Kernel::Table);
    println!("{}  (table kernel)", eval_search(&index, &queries, &gt, &table, Some(&data))?.csv_row());
    let unpruned = SearchParams::new(10, 16).with_epsilon0(f64::INFINITY);
    println!("{}  (pruning off)", eval_search(&index, &queries, &gt, &unpruned, Some(&data))?.csv_row());
    Ok(())
}
