//! 99.9% quantile of the inner-product error per bit width, against 5.75 * 2^-B / sqrt(D).
//!
//! `cargo run --release --example calibrate [dim]`

use xrbq::eval::{calibrate, Calibration};

fn main() -> xrbq::Result<()> {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let table = calibrate(dim, &[1, 2, 3, 4, 5, 6, 7, 8], 100_000, 0)?;
    println!("{}", Calibration::CSV_HEADER);
    for row in table.csv_rows() {
        println!("{row}");
    }
    println!("fitted c_eps = {:.3}", table.c_eps);
    Ok(())
}
