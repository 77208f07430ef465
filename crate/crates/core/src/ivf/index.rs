use std::collections::HashSet;

use rayon::prelude::*;

use crate::dataset::{padded_dim, VectorSet};
use crate::error::{check_len, invalid, Error, Result};
use crate::estimator::{MsbBlock, BLOCK_SIZE};
use crate::quantizer::{encode_vector, rest_bytes, Factors, QuantizationConfig, DEFAULT_EPSILON0};
use crate::rotator::RandomRotator;

use super::kmeans::{kmeans, KMeansResult};

/// `max(1, round(sqrt(N)))`, or 4096 once `N` reaches a million.
pub fn default_clusters(n: usize) -> usize {
    if n >= 1_000_000 {
        4096
    } else {
        ((n as f64).sqrt().round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct BuildParams {
    /// `None` picks [`default_clusters`].
    pub clusters: Option<usize>,
    pub bits: u8,
    pub epsilon0: f64,
    pub seed: u64,
    pub kmeans_iters: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self { clusters: None, bits: 5, epsilon0: DEFAULT_EPSILON0, seed: 0, kmeans_iters: 20 }
    }
}

/// Members of one inverted list, stored column-wise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cluster {
    pub(crate) ids: Vec<u64>,
    pub(crate) blocks: Vec<MsbBlock>,
    pub(crate) rest: Vec<u8>,
    pub(crate) rest_stride: usize,
    pub(crate) dist: Vec<f32>,
    pub(crate) f_rescale: Vec<f32>,
    pub(crate) f_rescale_1bit: Vec<f32>,
    pub(crate) f_error: Vec<f32>,
    pub(crate) degenerate: Vec<bool>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn blocks(&self) -> &[MsbBlock] {
        &self.blocks
    }

    /// Factors of member `i`, widened to `f64`.
    #[inline]
    pub fn factors(&self, i: usize) -> Factors {
        Factors {
            dist_to_centroid: self.dist[i] as f64,
            f_rescale: self.f_rescale[i] as f64,
            f_rescale_1bit: self.f_rescale_1bit[i] as f64,
            f_error: self.f_error[i] as f64,
            degenerate: self.degenerate[i],
        }
    }

    /// Packed remainder planes of member `i` (empty for 1-bit codes).
    #[inline]
    pub fn rest_planes(&self, i: usize) -> &[u8] {
        &self.rest[i * self.rest_stride..(i + 1) * self.rest_stride]
    }

    /// MSB plane of member `i`, unpacked from its block.
    pub fn msb_plane(&self, i: usize) -> Vec<u64> {
        self.blocks[i / BLOCK_SIZE].plane(i % BLOCK_SIZE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    pub(crate) config: QuantizationConfig,
    pub(crate) rotator: RandomRotator,
    pub(crate) centroids: VectorSet,
    pub(crate) clusters: Vec<Cluster>,
}

impl IvfIndex {
    /// Clusters `data`, samples a rotator and encodes every vector against its
    /// cluster centroid. `ids` defaults to `0..N`.
    pub fn build(data: &VectorSet, ids: Option<&[u64]>, params: &BuildParams) -> Result<Self> {
        data.require_non_empty("data")?;
        let dim = padded_dim(data.dim());
        let padded = data.padded(dim)?;
        let k = params.clusters.unwrap_or_else(|| default_clusters(data.len()));
        log::info!("k-means: {} vectors into {k} clusters", data.len());
        let clustering = kmeans(&padded, k, params.kmeans_iters, params.seed)?;
        Self::build_with_clustering(&padded, ids, &clustering, params.bits, params.epsilon0, params.seed)
    }

    /// Builds from a precomputed clustering, so one k-means run can serve
    /// several bit widths.
    pub fn build_with_clustering(
        data: &VectorSet,
        ids: Option<&[u64]>,
        clustering: &KMeansResult,
        bits: u8,
        epsilon0: f64,
        seed: u64,
    ) -> Result<Self> {
        data.require_non_empty("data")?;
        let dim = padded_dim(data.dim());
        let config = QuantizationConfig::new(bits, dim, epsilon0)?;
        let data = data.padded(dim)?;
        let centroids = clustering.centroids.padded(dim)?;
        let n = data.len();
        check_len("cluster assignments", n, clustering.assignments.len())?;
        let ids: Vec<u64> = match ids {
            Some(ids) => {
                check_len("ids", n, ids.len())?;
                let unique: HashSet<u64> = ids.iter().copied().collect();
                if unique.len() != n {
                    return Err(invalid("ids must be distinct"));
                }
                ids.to_vec()
            }
            None => (0..n as u64).collect(),
        };
        if let Some(&bad) = clustering.assignments.iter().find(|&&a| a as usize >= centroids.len()) {
            return Err(invalid(format!("assignment {bad} out of range for {} centroids", centroids.len())));
        }

        let rotator = RandomRotator::sample(dim, seed)?;
        let encoded = (0..n)
            .into_par_iter()
            .map(|i| encode_vector(data.row(i), centroids.row(clustering.assignments[i] as usize), &rotator, bits))
            .collect::<Result<Vec<_>>>()?;

        let stride = rest_bytes(dim, bits);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); centroids.len()];
        for (i, &a) in clustering.assignments.iter().enumerate() {
            members[a as usize].push(i);
        }
        let clusters = members
            .iter()
            .map(|list| {
                let mut c = Cluster { rest_stride: stride, ..Cluster::default() };
                for chunk in list.chunks(BLOCK_SIZE) {
                    let planes: Vec<&[u64]> = chunk.iter().map(|&i| encoded[i].code.msb_plane()).collect();
                    c.blocks.push(MsbBlock::pack(dim, &planes)?);
                }
                for &i in list {
                    let qv = &encoded[i];
                    c.ids.push(ids[i]);
                    c.rest.extend_from_slice(qv.code.rest_planes());
                    let f = &qv.factors;
                    c.dist.push(f.dist_to_centroid as f32);
                    c.f_rescale.push(f.f_rescale as f32);
                    c.f_rescale_1bit.push(f.f_rescale_1bit as f32);
                    c.f_error.push(f.f_error as f32);
                    c.degenerate.push(f.degenerate);
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        let index = Self { config, rotator, centroids, clusters };
        index.validate().map_err(|e| Error::Internal(e.to_string()))?;
        Ok(index)
    }

    pub fn config(&self) -> &QuantizationConfig {
        &self.config
    }

    pub fn bits(&self) -> u8 {
        self.config.bits()
    }

    /// Padded dimensionality.
    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn rotator(&self) -> &RandomRotator {
        &self.rotator
    }

    pub fn centroids(&self) -> &VectorSet {
        &self.centroids
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Structural checks shared by build and load.
    pub(crate) fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let corrupt = |m: String| Err(Error::Corrupt(m));
        if self.rotator.dim() != dim {
            return corrupt(format!("rotator dimension {} != {dim}", self.rotator.dim()));
        }
        if self.centroids.dim() != dim || self.centroids.len() != self.clusters.len() {
            return corrupt("centroid table does not match cluster count".into());
        }
        let stride = rest_bytes(dim, self.bits());
        let mut seen = HashSet::new();
        for (ci, c) in self.clusters.iter().enumerate() {
            let n = c.ids.len();
            let arrays = [c.dist.len(), c.f_rescale.len(), c.f_rescale_1bit.len(), c.f_error.len(), c.degenerate.len()];
            if arrays.iter().any(|&l| l != n) || c.rest.len() != n * stride || c.rest_stride != stride {
                return corrupt(format!("cluster {ci}: array lengths disagree with {n} members"));
            }
            if c.blocks.len() != n.div_ceil(BLOCK_SIZE)
                || c.blocks.iter().enumerate().any(|(b, blk)| blk.len() != (n - b * BLOCK_SIZE).min(BLOCK_SIZE))
            {
                return corrupt(format!("cluster {ci}: block layout does not match {n} members"));
            }
            for &id in &c.ids {
                if !seen.insert(id) {
                    return corrupt(format!("id {id} stored twice"));
                }
            }
        }
        Ok(())
    }
}
