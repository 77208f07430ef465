//! Inverted-file index over quantized codes.
//!
//! Vectors are clustered with k-means and quantized against their own cluster
//! centroid. A query scans the `nprobe` nearest clusters; every member gets a
//! cheap sign-code estimate, and only those whose lower bound does not exceed
//! the current K-th best distance are refined with the full code.

mod index;
pub mod kmeans;
mod persist;
mod search;

pub use index::{default_clusters, BuildParams, Cluster, IvfIndex};
pub use kmeans::{kmeans, KMeansResult};
pub use persist::{FORMAT_VERSION, MAGIC};
pub use search::{SearchParams, SearchResult, SearchStats};
