use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::pad_vector;
use crate::error::{invalid, Result};
use crate::estimator::{batch_stage1, estimate_stage1, estimate_stage2, preprocess_query, Kernel};

use super::kmeans::sqdist_f32;
use super::IvfIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    pub nprobe: usize,
    /// Replaces the index's `epsilon0`; `f64::INFINITY` disables pruning.
    pub epsilon0_override: Option<f64>,
    pub kernel: Kernel,
}

impl SearchParams {
    pub fn new(k: usize, nprobe: usize) -> Self {
        Self { k, nprobe, epsilon0_override: None, kernel: Kernel::Exact }
    }

    pub fn with_epsilon0(mut self, epsilon0: f64) -> Self {
        self.epsilon0_override = Some(epsilon0);
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub stage1: u64,
    pub stage2: u64,
    pub pruned: u64,
    pub clusters_probed: u64,
    /// `nprobe` exceeded the cluster count and was clamped.
    pub nprobe_clamped: bool,
}

impl SearchStats {
    pub fn accumulate(&mut self, other: &SearchStats) {
        self.stage1 += other.stage1;
        self.stage2 += other.stage2;
        self.pruned += other.pruned;
        self.clusters_probed += other.clusters_probed;
        self.nprobe_clamped |= other.nprobe_clamped;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub ids: Vec<u64>,
    /// Ascending; `est_sqdists[i]` belongs to `ids[i]`.
    pub est_sqdists: Vec<f64>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    est: f64,
    id: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.total_cmp(&other.est).then(self.id.cmp(&other.id))
    }
}

/// The K best candidates; the top is the worst kept one.
struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn threshold(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.est)
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if c < *top {
                *top = c;
            }
        }
    }
}

impl IvfIndex {
    /// Clusters ordered by exact distance from `q` to their centroid (ties by index).
    pub fn rank_clusters(&self, q: &[f32]) -> Vec<usize> {
        let mut order: Vec<(f32, usize)> =
            self.centroids.rows().enumerate().map(|(i, c)| (sqdist_f32(q, c), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().map(|(_, i)| i).collect()
    }

    /// Approximate K nearest neighbors of `q_r`. Queries shorter than the
    /// padded dimension are zero-padded.
    pub fn search(&self, q_r: &[f32], params: &SearchParams) -> Result<SearchResult> {
        if params.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if params.nprobe == 0 {
            return Err(invalid("nprobe must be at least 1"));
        }
        let q = pad_vector(q_r, self.dim())?;
        let mut stats = SearchStats::default();
        let nprobe = if params.nprobe > self.num_clusters() {
            log::warn!("nprobe {} exceeds {} clusters; clamped", params.nprobe, self.num_clusters());
            stats.nprobe_clamped = true;
            self.num_clusters()
        } else {
            params.nprobe
        };
        let epsilon0 = params.epsilon0_override.unwrap_or(self.config.epsilon0());
        let prune = epsilon0.is_finite();
        let bits = self.bits();

        let mut top = TopK { k: params.k, heap: BinaryHeap::with_capacity(params.k + 1) };
        for &ci in self.rank_clusters(&q).iter().take(nprobe) {
            let cluster = &self.clusters[ci];
            stats.clusters_probed += 1;
            if cluster.is_empty() {
                continue;
            }
            let mut qc = preprocess_query(&q, self.centroids.row(ci), &self.rotator, epsilon0)?;
            if params.kernel == Kernel::Table {
                qc = qc.with_lut();
            }
            for (b, block) in cluster.blocks.iter().enumerate() {
                let batch = batch_stage1(block, &qc, params.kernel)?;
                for j in 0..block.len() {
                    let i = b * crate::estimator::BLOCK_SIZE + j;
                    let factors = cluster.factors(i);
                    stats.stage1 += 1;
                    if prune {
                        let s1 = estimate_stage1(&factors, batch.ips[j], batch.max_deviation, &qc);
                        if s1.lower_bound > top.threshold() {
                            stats.pruned += 1;
                            continue;
                        }
                    }
                    let ip_b = match params.kernel {
                        Kernel::Exact => batch.ips[j],
                        Kernel::Table => block.code_ip(j, &qc),
                    };
                    let est = if bits == 1 {
                        estimate_stage1(&factors, ip_b, 0.0, &qc).est_sqdist
                    } else {
                        stats.stage2 += 1;
                        estimate_stage2(&factors, cluster.rest_planes(i), bits, ip_b, &qc)?.est_sqdist
                    };
                    top.offer(Candidate { est, id: cluster.ids[i] });
                }
            }
        }

        let sorted = top.heap.into_sorted_vec();
        Ok(SearchResult {
            ids: sorted.iter().map(|c| c.id).collect(),
            est_sqdists: sorted.iter().map(|c| c.est).collect(),
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VectorSet;
    use crate::ivf::BuildParams;

    fn tiny() -> IvfIndex {
        let rows: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32, (i % 7) as f32, 1.0]).collect();
        let data = VectorSet::from_rows(&rows).unwrap();
        IvfIndex::build(&data, None, &BuildParams { clusters: Some(4), bits: 6, ..BuildParams::default() }).unwrap()
    }

    #[test]
    fn returns_everything_when_k_is_n() {
        let idx = tiny();
        let r = idx.search(&[3.0, 1.0, 1.0], &SearchParams::new(40, 4)).unwrap();
        let mut ids = r.ids.clone();
        ids.sort();
        assert_eq!(ids, (0..40).collect::<Vec<u64>>());
        assert!(r.est_sqdists.windows(2).all(|w| w[0] <= w[1]));
        let more = idx.search(&[3.0, 1.0, 1.0], &SearchParams::new(100, 4)).unwrap();
        assert_eq!(more.ids.len(), 40);
    }

    #[test]
    fn nprobe_clamped() {
        let idx = tiny();
        let r = idx.search(&[3.0, 1.0, 1.0], &SearchParams::new(5, 99)).unwrap();
        assert!(r.stats.nprobe_clamped);
        assert_eq!(r.stats.clusters_probed, 4);
    }

    #[test]
    fn bad_params() {
        let idx = tiny();
        assert!(idx.search(&[0.0; 3], &SearchParams::new(0, 1)).is_err());
        assert!(idx.search(&[0.0; 3], &SearchParams::new(1, 0)).is_err());
        assert!(idx.search(&[0.0; 65], &SearchParams::new(1, 1)).is_err());
    }

    #[test]
    fn table_kernel_finds_same_neighbors() {
        let idx = tiny();
        let q = [12.0, 3.0, 1.0];
        let a = idx.search(&q, &SearchParams::new(5, 4)).unwrap();
        let b = idx.search(&q, &SearchParams::new(5, 4).with_kernel(Kernel::Table)).unwrap();
        assert_eq!(a.ids, b.ids);
        assert_eq!(a.est_sqdists, b.est_sqdists);
    }
}
