//! Exact and lookup-table kernels over one 32-code block.
//!
//! `cargo run --example fastscan_kernels`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrbq::estimator::{batch_stage1, stage1_ip, Kernel, MsbBlock, QueryContext, BLOCK_SIZE};
use xrbq::eval::random_unit;

fn main() -> xrbq::Result<()> {
    let dim = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let qc = QueryContext::from_rotated(random_unit(dim, &mut rng), 1.0, 1.9).with_lut();
    let planes: Vec<Vec<u64>> = (0..BLOCK_SIZE).map(|_| (0..dim / 64).map(|_| rng.random()).collect()).collect();
    let refs: Vec<&[u64]> = planes.iter().map(Vec::as_slice).collect();
    let block = MsbBlock::pack(dim, &refs)?;

    let exact = batch_stage1(&block, &qc, Kernel::Exact)?;
    let table = batch_stage1(&block, &qc, Kernel::Table)?;
    let lut = qc.lut().expect("lut attached");
    println!("query step {:.3e}, declared bound {:.3e}", lut.delta(), lut.deviation_bound());
    let mut worst = 0.0f64;
    for ((plane, &e), &t) in planes.iter().zip(&exact.ips).zip(&table.ips) {
        assert_eq!(e, stage1_ip(plane, &qc));
        worst = worst.max((t - e).abs());
    }
    println!("exact kernel matches the scalar path; worst table deviation {worst:.3e}");
    Ok(())
}
