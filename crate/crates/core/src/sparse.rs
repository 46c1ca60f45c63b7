//! Compressed sparse row matrices and sparse Cholesky factorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{EigenError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed
    /// in input order, so the result is independent of thread scheduling as
    /// long as the triplet list is.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> CsrMatrix {
        trips.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trips.len() / 4);
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len() / 4);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    /// Zero matrix with the given sorted column pattern per row.
    pub fn with_pattern(rows: Vec<Vec<usize>>) -> CsrMatrix {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        CsrMatrix { n, row_ptr, cols, vals }
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let k = self.cols[a..b].binary_search(&j).expect("entry outside the sparsity pattern");
        self.vals[a + k] += v;
    }

    pub fn from_dense(a: &[Vec<f64>]) -> CsrMatrix {
        let n = a.len();
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    /// `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.vals[k] * y[self.cols[k]];
            }
            acc += x[i] * r;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(cols.capacity());
        for i in 0..self.n {
            let (mut p, pe) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut q, qe) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.cols[p] } else { usize::MAX };
                let cq = if q < qe { other.cols[q] } else { usize::MAX };
                if cp == cq {
                    cols.push(cp);
                    vals.push(a * self.vals[p] + b * other.vals[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    cols.push(cp);
                    vals.push(a * self.vals[p]);
                    p += 1;
                } else {
                    cols.push(cq);
                    vals.push(b * other.vals[q]);
                    q += 1;
                }
            }
            row_ptr[i + 1] = cols.len();
        }
        CsrMatrix { n: self.n, row_ptr, cols, vals }
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut d = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d = d.max((v - self.get(j, i)).abs());
            }
        }
        d / scale
    }

    /// Principal submatrix on `keep` (indices into the original), in that order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdFactor {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SpdFactor {
    pub fn new(a: &CsrMatrix) -> Result<SpdFactor> {
        let n = a.n();
        if n == 0 {
            return Err(EigenError::Factorization("empty matrix".into()).into());
        }
        let mut trips = Vec::with_capacity(a.nnz() / 2 + n);
        for i in 0..n {
            for (j, v) in a.row(i) {
                if i >= j {
                    trips.push(Triplet::new(i, j, v));
                }
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| EigenError::Factorization(format!("{e:?}")))?;
        let llt = m
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| EigenError::Factorization(format!("matrix is not positive definite ({e:?})")))?;
        Ok(SpdFactor { n, llt })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut m = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(m.as_mut());
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = m[(i, 0)];
        }
    }
}

/// Solver for a symmetric positive semidefinite matrix with a known
/// one-dimensional kernel: one unknown is pinned to zero and the remaining
/// principal submatrix is factored.
pub struct PinnedFactor {
    pin: usize,
    keep: Vec<usize>,
    factor: SpdFactor,
}

impl PinnedFactor {
    pub fn new(a: &CsrMatrix, pin: usize) -> Result<PinnedFactor> {
        let keep: Vec<usize> = (0..a.n()).filter(|&i| i != pin).collect();
        let factor = SpdFactor::new(&a.principal_submatrix(&keep))?;
        Ok(PinnedFactor { pin, keep, factor })
    }

    pub fn pin(&self) -> usize {
        self.pin
    }

    /// Solves with the pinned row dropped; the pinned unknown is zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.keep.iter().map(|&i| b[i]).collect();
        self.factor.solve_in_place(&mut r);
        let mut x = vec![0.0; self.keep.len() + 1];
        for (k, &i) in self.keep.iter().enumerate() {
            x[i] = r[k];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (0, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn combine_and_forms() {
        let a = laplace_1d(5);
        let i = CsrMatrix::identity(5);
        let c = a.combine(1.0, &i, -2.0);
        assert_eq!(c.get(2, 2), 0.0);
        assert_eq!(c.get(2, 3), -1.0);
        let x = vec![1.0; 5];
        assert_eq!(a.form(&x, &x), 2.0);
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn cholesky_solves_and_rejects_indefinite() {
        let a = laplace_1d(50);
        let f = SpdFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
        let bad = a.combine(1.0, &CsrMatrix::identity(50), -1.0);
        assert!(SpdFactor::new(&bad).is_err());
    }

    #[test]
    fn pinned_solve_on_singular_matrix() {
        // periodic Laplacian, kernel = constants
        let n = 8;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, t);
        let p = PinnedFactor::new(&a, 3).unwrap();
        let mut b: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let x = p.solve(&b);
        assert_eq!(x[3], 0.0);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }
}
