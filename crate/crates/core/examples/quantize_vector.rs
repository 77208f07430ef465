//! Quantize one vector at several bit widths and inspect the code.
//!
//! `cargo run --example quantize_vector`

use xrbq::quantizer::{encode_vector, reconstruct};
use xrbq::rotator::RandomRotator;

fn main() -> xrbq::Result<()> {
    let dim = 64;
    let rotator = RandomRotator::sample(dim, 1)?;
    let centroid = vec![0.0f32; dim];
    let v: Vec<f32> = (0..dim).map(|i| ((i * 37 % 11) as f32 - 5.0) / 3.0).collect();

    println!("bits  <o,o_bar>  <o,o_bar0>  |y|        f_error    first codes");
    for bits in [1u8, 2, 4, 6, 8] {
        let qv = encode_vector(&v, &centroid, &rotator, bits)?;
        let codes: Vec<String> = qv.code.unpack().iter().take(6).map(u16::to_string).collect();
        println!(
            "{bits:>4}  {:.6}   {:.6}    {:>9.3}  {:.3e}  {}",
            qv.ip_o_obar,
            qv.ip_o_obar0,
            qv.norm_y,
            qv.factors.f_error,
            codes.join(" ")
        );
        // The reconstructed unit vector points (almost) along o.
        let o_bar = reconstruct(&qv.code, &rotator)?;
        let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let cos: f64 = o_bar.iter().zip(&v).map(|(a, &b)| a * b as f64 / n).sum();
        assert!((cos - qv.ip_o_obar).abs() < 1e-5);
    }
    Ok(())
}
