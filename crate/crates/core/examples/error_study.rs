//! Relative error of squared-distance estimates per method and bit width, as CSV.
//!
//! `cargo run --release --example error_study [dim]`

use xrbq::eval::{eval_error, synth_blobs, synth_queries, ErrorMethod, ErrorStats, SynthParams, MAX_ERROR_PAIRS};

fn main() -> xrbq::Result<()> {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let p = SynthParams { n: 1000, dim, clusters: 1, separation: 0.0, seed: 2 };
    let data = synth_blobs(&p)?.data;
    let queries = synth_queries(&p, 50)?;
    println!("{}", ErrorStats::CSV_HEADER);
    for method in ErrorMethod::ALL {
        for bits in 1..=8u8 {
            println!("{}", eval_error(&data, &queries, method, bits, MAX_ERROR_PAIRS, 2)?.csv_row());
        }
    }
    Ok(())
}
