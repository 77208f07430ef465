//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::VectorSet;
use crate::error::{invalid, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: VectorSet,
    pub assignments: Vec<u32>,
    /// Objective (sum of squared distances to the assigned centroid) after
    /// every assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

/// Squared L2 distance; eight independent lanes so the loop vectorizes.
#[inline]
pub fn sqdist_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f32>() + tail
}

fn nearest(point: &[f32], centroids: &VectorSet) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, row) in centroids.rows().enumerate() {
        let d = sqdist_f32(point, row);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn seed_plus_plus(data: &VectorSet, k: usize, rng: &mut impl Rng) -> VectorSet {
    let n = data.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = VectorSet::new(data.dim(), data.row(first).to_vec()).unwrap();
    let mut min_d2: Vec<f32> = data.rows().map(|r| sqdist_f32(r, data.row(first))).collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0f64;
            let mut pick = None;
            for (i, &d) in min_d2.iter().enumerate() {
                acc += d as f64;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| min_d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Only duplicates of existing centroids remain.
            chosen.iter().position(|&c| !c).unwrap()
        };
        chosen[pick] = true;
        let c = data.row(pick).to_vec();
        centroids.push(&c).unwrap();
        min_d2.par_iter_mut().enumerate().for_each(|(i, m)| {
            let d = sqdist_f32(data.row(i), &c);
            if d < *m {
                *m = d;
            }
        });
    }
    centroids
}

/// Clusters `data` into `k` groups.
///
/// Runs until `max_iters` Lloyd iterations or until no assignment changes.
/// A cluster that empties is re-seeded with the member of the largest cluster
/// farthest from its centroid, which keeps the objective non-increasing.
pub fn kmeans(data: &VectorSet, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.len();
    if k == 0 {
        return Err(invalid("k-means needs at least one cluster"));
    }
    if k > n {
        return Err(invalid(format!("cannot form {k} clusters from {n} points")));
    }
    let mut rng = rng::stream(seed, Stream::KMeans);
    let mut centroids = seed_plus_plus(data, k, &mut rng);
    let dim = data.dim();

    let mut assignments = vec![u32::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let assigned: Vec<(u32, f32)> = (0..n).into_par_iter().map(|i| nearest(data.row(i), &centroids)).collect();
        let changed = assigned.iter().zip(&assignments).filter(|((c, _), &old)| *c != old).count();
        for (slot, (c, _)) in assignments.iter_mut().zip(&assigned) {
            *slot = *c;
        }
        history.push(assigned.iter().map(|&(_, d)| d as f64).sum());
        if changed == 0 || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, &x) in sums[c as usize * dim..(c as usize + 1) * dim].iter_mut().zip(data.row(i)) {
                *s += x as f64;
            }
        }
        let mut next = Vec::with_capacity(k * dim);
        for c in 0..k {
            if counts[c] == 0 {
                next.extend_from_slice(centroids.row(c));
            } else {
                let inv = 1.0 / counts[c] as f64;
                next.extend(sums[c * dim..(c + 1) * dim].iter().map(|s| (s * inv) as f32));
            }
        }
        centroids = VectorSet::new(dim, next)?;

        let mut taken = vec![false; n];
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        for empty in empties {
            let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
            let far = (0..n)
                .filter(|&i| assignments[i] as usize == largest && !taken[i])
                .map(|i| (i, sqdist_f32(data.row(i), centroids.row(largest))))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((i, _)) = far {
                taken[i] = true;
                counts[largest] -= 1;
                counts[empty] += 1;
                let row = data.row(i).to_vec();
                let mut flat = centroids.as_slice().to_vec();
                flat[empty * dim..(empty + 1) * dim].copy_from_slice(&row);
                centroids = VectorSet::new(dim, flat)?;
                log::debug!("k-means: re-seeded empty cluster {empty} from cluster {largest}");
            }
        }
    }
    Ok(KMeansResult { centroids, assignments, objective_history: history, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn one_point_per_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f32>> = (0..12).map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let data = VectorSet::from_rows(&rows).unwrap();
        let res = kmeans(&data, 12, 20, 3).unwrap();
        assert_eq!(res.objective(), 0.0);
        let mut seen = res.assignments.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn too_many_clusters() {
        let data = VectorSet::new(2, vec![0.0; 6]).unwrap();
        assert!(kmeans(&data, 4, 10, 0).is_err());
        assert!(kmeans(&data, 0, 10, 0).is_err());
    }

    #[test]
    fn objective_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f32>> =
            (0..500).map(|_| (0..16).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let data = VectorSet::from_rows(&rows).unwrap();
        let res = kmeans(&data, 10, 30, 5).unwrap();
        for w in res.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let data = VectorSet::new(2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        let res = kmeans(&data, 3, 5, 0).unwrap();
        assert_eq!(res.centroids.len(), 3);
    }
}
