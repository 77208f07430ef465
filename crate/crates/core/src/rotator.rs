//! Random orthogonal transforms.
//!
//! A [`RandomRotator`] holds an explicitly stored `D x D` orthogonal matrix `P`
//! sampled by orthonormalizing a matrix of i.i.d. standard normals (Haar
//! distributed up to the orthonormalization). The quantization codebook is the
//! image under `P` of a fixed grid, so `P` is all that has to be stored for it.
//!
//! Entries are kept as `f32` (the on-disk precision); all products accumulate
//! in `f64`.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, invalid, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomRotator {
    dim: usize,
    seed: u64,
    /// Row-major `P`.
    matrix: Vec<f32>,
}

impl RandomRotator {
    /// Samples a `dim x dim` orthogonal matrix from the seeded rotation stream.
    pub fn sample(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("rotator dimension must be at least 1"));
        }
        let rows = orthonormal_rows(dim, dim, seed);
        let matrix = rows.iter().map(|&x| x as f32).collect();
        Ok(Self { dim, seed, matrix })
    }

    /// Wraps an existing row-major matrix. Only the shape is checked.
    pub fn from_parts(dim: usize, seed: u64, matrix: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("rotator dimension must be at least 1"));
        }
        check_len("rotator matrix", dim * dim, matrix.len())?;
        Ok(Self { dim, seed, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0f32; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { dim, seed: 0, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f32 {
        self.matrix[row * self.dim + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.entry(r, col) as f64).collect()
    }

    /// `P v`.
    pub fn apply_forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_forward input", self.dim, v.len())?;
        Ok(self.matrix.chunks_exact(self.dim).map(|row| row.iter().zip(v).map(|(&p, &x)| p as f64 * x).sum()).collect())
    }

    /// `P^T v`, which is `P^-1 v` for orthogonal `P`.
    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_inverse input", self.dim, v.len())?;
        let mut out = vec![0.0f64; self.dim];
        transpose_accumulate(&self.matrix, self.dim, v, &mut out);
        Ok(out)
    }
}

/// Projection to `out_dim` dimensions through a matrix with orthonormal rows.
///
/// The rows are the first `out_dim` columns of the [`RandomRotator`] sampled
/// with the same `(in_dim, seed)`, so at `out_dim == in_dim` projecting is
/// exactly `apply_inverse` of that rotator.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRotator {
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    /// Row-major, `out_dim x in_dim`.
    matrix: Vec<f32>,
}

impl ReducedRotator {
    pub fn sample(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if out_dim == 0 || out_dim > in_dim {
            return Err(invalid(format!(
                "reduced dimension must satisfy 1 <= out_dim <= in_dim (got {out_dim} > {in_dim})"
            )));
        }
        let full = RandomRotator::sample(in_dim, seed)?;
        Ok(Self::from_rotator(&full, out_dim))
    }

    /// Keeps the first `out_dim` columns of `P` as projection rows.
    pub fn from_rotator(rotator: &RandomRotator, out_dim: usize) -> Self {
        let in_dim = rotator.dim();
        let out_dim = out_dim.min(in_dim);
        let mut matrix = Vec::with_capacity(out_dim * in_dim);
        for j in 0..out_dim {
            matrix.extend((0..in_dim).map(|i| rotator.entry(i, j)));
        }
        Self { in_dim, out_dim, seed: rotator.seed(), matrix }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.matrix[r * self.in_dim..(r + 1) * self.in_dim]
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("project input", self.in_dim, v.len())?;
        // Same accumulation order as `RandomRotator::apply_inverse`.
        let mut out = vec![0.0f64; self.out_dim];
        for (i, &x) in v.iter().enumerate() {
            for (o, r) in out.iter_mut().enumerate() {
                *r += self.matrix[o * self.in_dim + i] as f64 * x;
            }
        }
        Ok(out)
    }
}

fn transpose_accumulate(matrix: &[f32], dim: usize, v: &[f64], out: &mut [f64]) {
    for (row, &x) in matrix.chunks_exact(dim).zip(v) {
        for (o, &p) in out.iter_mut().zip(row) {
            *o += p as f64 * x;
        }
    }
}

/// `rows x cols` Gaussian matrix with orthonormalized rows (row-major, f64).
///
/// Modified Gram-Schmidt with a second re-orthogonalization pass; rows that
/// collapse numerically are redrawn.
fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Stream::Rotation);
    let mut basis: Vec<f64> = Vec::with_capacity(rows * cols);
    let mut v = vec![0.0f64; cols];
    for r in 0..rows {
        loop {
            for x in v.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let initial = norm(&v);
            for _pass in 0..2 {
                for prev in basis.chunks_exact(cols) {
                    let proj = dot(&v, prev);
                    for (x, &p) in v.iter_mut().zip(prev) {
                        *x -= proj * p;
                    }
                }
            }
            let n = norm(&v);
            if n > 1e-8 * initial.max(f64::MIN_POSITIVE) {
                basis.extend(v.iter().map(|x| x / n));
                break;
            }
            log::debug!("redrawing degenerate rotation row {r}");
        }
    }
    basis
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_max_dev(r: &RandomRotator) -> f64 {
        let d = r.dim();
        let cols: Vec<Vec<f64>> = (0..d).map(|j| r.column(j)).collect();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let g = dot(&cols[i], &cols[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(RandomRotator::sample(0, 1).is_err());
    }

    #[test]
    fn one_dim_is_plus_or_minus_one() {
        for seed in 0..10 {
            let r = RandomRotator::sample(1, seed).unwrap();
            assert_eq!(r.matrix()[0].abs(), 1.0);
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        let r = RandomRotator::sample(64, 42).unwrap();
        assert!(gram_max_dev(&r) <= 1e-6, "{}", gram_max_dev(&r));
    }

    #[test]
    fn round_trip_basis_vector() {
        let r = RandomRotator::sample(4, 7).unwrap();
        let e1 = vec![1.0, 0.0, 0.0, 0.0];
        let back = r.apply_inverse(&r.apply_forward(&e1).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&e1) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn inverse_of_column_is_basis_vector() {
        let r = RandomRotator::sample(16, 3).unwrap();
        let col = r.column(2);
        let e = r.apply_inverse(&col).unwrap();
        for (i, x) in e.iter().enumerate() {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((x - want).abs() <= 1e-5);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = RandomRotator::sample(32, 99).unwrap();
        let b = RandomRotator::sample(32, 99).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = RandomRotator::sample(32, 100).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn length_mismatch_rejected() {
        let r = RandomRotator::sample(8, 1).unwrap();
        assert!(r.apply_inverse(&[0.0; 7]).is_err());
        assert!(r.apply_forward(&[0.0; 9]).is_err());
        assert!(RandomRotator::from_parts(3, 0, vec![0.0; 8]).is_err());
    }

    #[test]
    fn zero_maps_to_zero() {
        let r = RandomRotator::sample(8, 1).unwrap();
        assert!(r.apply_inverse(&[0.0; 8]).unwrap().iter().all(|&x| x == 0.0));
        let rd = ReducedRotator::sample(8, 3, 1).unwrap();
        assert!(rd.project(&[0.0; 8]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reduced_rows_orthonormal() {
        let rd = ReducedRotator::sample(48, 20, 5).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let g: f64 = rd.row(i).iter().zip(rd.row(j)).map(|(&a, &b)| a as f64 * b as f64).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn reduced_full_dim_matches_inverse_bitwise() {
        let r = RandomRotator::sample(24, 11).unwrap();
        let rd = ReducedRotator::sample(24, 24, 11).unwrap();
        let v: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(r.apply_inverse(&v).unwrap(), rd.project(&v).unwrap());
    }

    #[test]
    fn reduced_dimension_bounds() {
        assert!(ReducedRotator::sample(8, 9, 0).is_err());
        assert!(ReducedRotator::sample(8, 0, 0).is_err());
    }
}
