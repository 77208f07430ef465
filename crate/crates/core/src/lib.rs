//! Extended RaBitQ: `B`-bit vector quantization with unbiased distance
//! estimation, and an IVF index that scans the sign bits first and only reads
//! the remaining bits for candidates it cannot rule out.
//!
//! Module map:
//!
//! * [`rotator`]: random orthogonal transforms defining the codebook.
//! * [`quantizer`]: code search, bit-plane packing, per-vector factors.
//! * [`estimator`]: query preprocessing, stage-1/stage-2 estimates, batched kernel.
//! * [`ivf`]: k-means, index build, persistence, pruned top-K search.
//! * [`baselines`]: global (SQ) and per-vector (LVQ) scalar quantizers.
//! * [`eval`]: ground truth, recall and error metrics, calibration, synthetic data.
//! * [`dataset`]: vector sets and the `.fvecs` / `.ivecs` formats.
//! * [`cli`]: the `xrbq` command-line tool.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod ivf;
pub mod quantizer;
pub mod rng;
pub mod rotator;

pub use error::{Error, Result};
