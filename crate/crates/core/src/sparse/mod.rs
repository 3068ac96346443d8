//! Sparse symmetric linear algebra for Gaussian Markov random fields.
//!
//! Precision matrices are stored as the lower triangle in compressed-column
//! form ([`SparsePrecision`]). Observation matrices are general row-compressed
//! matrices ([`SparseMatrix`]). Factorization, solves, sampling and marginal
//! variances live on [`CholeskyFactor`].

mod cholesky;
mod constraint;
mod matrix;
mod ordering;
mod takahashi;

pub use cholesky::{factorize, CholeskyFactor, Ordering, PD_TOLERANCE};
pub use constraint::{constrain, constrain_sum_to_zero, ConstraintInfo};
pub use matrix::SparseMatrix;
pub use ordering::minimum_degree;
pub use takahashi::DENSE_THRESHOLD;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparse matrix, lower triangle in compressed-column form.
///
/// Row indices inside each column are strictly increasing and never smaller
/// than the column index, so a present diagonal entry is always the first
/// entry of its column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrecision {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparsePrecision {
    /// Build from `(row, col, value)` triplets. Either triangle may be given;
    /// `(i, j)` and `(j, i)` land on the same stored entry and duplicates are
    /// summed. Diagonal entries are always stored, as zero when absent.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len() + n);
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: i.max(j) + 1,
                });
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            entries.push((r, c, v));
        }
        entries.extend((0..n).map(|k| (k, k, 0.0)));
        Ok(Self::from_sorted_entries(n, entries))
    }

    fn from_sorted_entries(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|e| (e.1, e.0));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((r, c));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        SparsePrecision {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SparsePrecision {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Lower triangle of a dense symmetric matrix; exact zeros off the
    /// diagonal are dropped.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut trip = Vec::new();
        for j in 0..n {
            for i in j..n {
                let v = m[(i, j)];
                if i == j || v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries (lower triangle including diagonal).
    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Structural nonzeros of the full symmetric matrix.
    pub fn nnz_full(&self) -> usize {
        self.iter().map(|(i, j, _)| if i == j { 1 } else { 2 }).sum()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lower-triangle entries `(row, col, value)` in column order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    /// Entries of the full symmetric matrix, both triangles.
    pub fn iter_full(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.iter().flat_map(|(i, j, v)| {
            let mirror = if i != j { Some((j, i, v)) } else { None };
            std::iter::once((i, j, v)).chain(mirror)
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|c| self.get(c, c)).collect()
    }

    pub fn max_diag(&self) -> f64 {
        self.diag().into_iter().fold(0.0, f64::max)
    }

    /// `y = Q x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for (i, j, v) in self.iter() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        Ok(y)
    }

    /// `xᵀ Q x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let qx = self.matvec(x)?;
        Ok(qx.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn with_added_diagonal(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for c in 0..out.n {
            // from_triplets guarantees the diagonal is stored first
            let p = out.col_ptr[c];
            debug_assert_eq!(out.row_idx[p], c);
            out.values[p] += eps;
        }
        out
    }

    /// Entrywise sum; patterns are merged.
    pub fn add(&self, other: &SparsePrecision) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let entries = self.iter().chain(other.iter()).collect();
        Ok(Self::from_sorted_entries(self.n, entries))
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[&SparsePrecision]) -> Self {
        let n = blocks.iter().map(|b| b.n).sum();
        let mut entries = Vec::with_capacity(blocks.iter().map(|b| b.nnz_lower()).sum());
        let mut off = 0;
        for b in blocks {
            entries.extend(b.iter().map(|(i, j, v)| (i + off, j + off, v)));
            off += b.n;
        }
        Self::from_sorted_entries(n, entries)
    }

    /// Kronecker product `self ⊗ other`, keeping every structural entry.
    pub fn kronecker(&self, other: &SparsePrecision) -> Self {
        let nb = other.n;
        let mut entries = Vec::with_capacity(self.nnz_full() * other.nnz_full() / 2 + self.n * nb);
        for (ia, ja, va) in self.iter_full() {
            for (ib, jb, vb) in other.iter_full() {
                let r = ia * nb + ib;
                let c = ja * nb + jb;
                if r >= c {
                    entries.push((r, c, va * vb));
                }
            }
        }
        Self::from_sorted_entries(self.n * nb, entries)
    }

    /// Principal submatrix on the rows/columns listed in `keep` (increasing).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let entries = self
            .iter()
            .filter_map(|(i, j, v)| {
                let (a, b) = (map[i], map[j]);
                (a != usize::MAX && b != usize::MAX).then_some(if a >= b { (a, b, v) } else { (b, a, v) })
            })
            .collect();
        Self::from_sorted_entries(keep.len(), entries)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter_full() {
            m[(i, j)] = v;
        }
        m
    }

    /// Adjacency lists of the off-diagonal pattern.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, _) in self.iter() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_fold_upper_into_lower_and_sum() {
        let q = SparsePrecision::from_triplets(2, &[(0, 1, -1.0), (1, 0, -1.0), (0, 0, 2.0), (1, 1, 2.0)])
            .unwrap();
        assert_eq!(q.get(1, 0), -2.0);
        assert_eq!(q.get(0, 1), -2.0);
        assert_eq!(q.nnz_lower(), 3);
        assert_eq!(q.nnz_full(), 4);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(matches!(
            SparsePrecision::from_triplets(2, &[(2, 0, 1.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kronecker_with_identity_is_block_diagonal() {
        let q = SparsePrecision::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        let k = SparsePrecision::identity(2).kronecker(&q);
        assert_eq!(k, SparsePrecision::block_diag(&[&q, &q]));
    }

    #[test]
    fn kronecker_matches_definition() {
        let a = SparsePrecision::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        let k = a.kronecker(&SparsePrecision::identity(2)).to_dense();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, -1.0, 0.0, //
                0.0, 2.0, 0.0, -1.0, //
                -1.0, 0.0, 2.0, 0.0, //
                0.0, -1.0, 0.0, 2.0,
            ],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn submatrix_drops_rows_and_columns() {
        let d = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 2.0, 1.0, 5.0, 3.0, 2.0, 3.0, 6.0]);
        let q = SparsePrecision::from_dense(&d).unwrap();
        let s = q.principal_submatrix(&[0, 2]).to_dense();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 6.0]));
    }
}
