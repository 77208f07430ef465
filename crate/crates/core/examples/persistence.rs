//! Save an index, load it back and show how damaged files are rejected.
//!
//! `cargo run --example persistence`

use xrbq::eval::{synth_blobs, SynthParams};
use xrbq::ivf::{BuildParams, IvfIndex};

fn main() -> xrbq::Result<()> {
    let data = synth_blobs(&SynthParams { n: 2000, dim: 48, clusters: 10, separation: 2.0, seed: 5 })?.data;
    let index = IvfIndex::build(&data, None, &BuildParams { clusters: Some(20), bits: 4, ..BuildParams::default() })?;

    let path = std::env::temp_dir().join("xrbq-example.xrbq");
    index.save(&path)?;
    let loaded = IvfIndex::load(&path)?;
    println!("{} bytes, round trip equal: {}", std::fs::metadata(&path)?.len(), loaded == index);

    let bytes = std::fs::read(&path)?;
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 3] ^= 0x10;
    let mut newer = bytes.clone();
    newer[4] = 9;
    for (what, b) in
        [("truncated", &bytes[..bytes.len() - 1]), ("bit flip", &flipped[..]), ("newer version", &newer[..])]
    {
        match IvfIndex::from_bytes(b) {
            Ok(_) => println!("{what}: accepted"),
            Err(e) => println!("{what}: {e}"),
        }
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
