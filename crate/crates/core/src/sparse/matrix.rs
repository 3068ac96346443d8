use nalgebra::DMatrix;

use super::SparsePrecision;
use crate::error::{Error, Result};

/// General sparse matrix in compressed-row form.
///
/// Used for the observation matrix `A` that maps the latent field onto linear
/// predictors; most rows carry one or a handful of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate `(row, col)` entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = triplets.to_vec();
        for &(i, j, _) in &entries {
            if i >= nrows {
                return Err(Error::DimensionMismatch {
                    expected: nrows,
                    found: i + 1,
                });
            }
            if j >= ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    found: j + 1,
                });
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((i, j));
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).expect("indices in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect())
    }

    /// `Aᵀ y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: y.len(),
            });
        }
        let mut out = vec![0.0; self.ncols];
        for (i, j, v) in self.iter() {
            out[j] += v * y[i];
        }
        Ok(out)
    }

    /// `Aᵀ diag(w) A` as a symmetric precision.
    pub fn weighted_gram(&self, w: &[f64]) -> Result<SparsePrecision> {
        if w.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: w.len(),
            });
        }
        let mut trip = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            let row: Vec<(usize, f64)> = self.row(i).collect();
            for (a, &(ja, va)) in row.iter().enumerate() {
                for &(jb, vb) in &row[..=a] {
                    trip.push((ja, jb, wi * va * vb));
                }
            }
        }
        SparsePrecision::from_triplets(self.ncols, &trip)
    }

    /// Drop column `k`; returns the reduced matrix and the dropped column as
    /// a dense vector of length `nrows`.
    pub fn split_column(&self, k: usize) -> (SparseMatrix, Vec<f64>) {
        let mut col = vec![0.0; self.nrows];
        let mut trip = Vec::with_capacity(self.nnz());
        for (i, j, v) in self.iter() {
            match j.cmp(&k) {
                std::cmp::Ordering::Equal => col[i] += v,
                std::cmp::Ordering::Less => trip.push((i, j, v)),
                std::cmp::Ordering::Greater => trip.push((i, j - 1, v)),
            }
        }
        let reduced =
            SparseMatrix::from_triplets(self.nrows, self.ncols - 1, &trip).expect("indices in range");
        (reduced, col)
    }

    /// Rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut trip = Vec::new();
        for (new, &old) in rows.iter().enumerate() {
            trip.extend(self.row(old).map(|(j, v)| (new, j, v)));
        }
        SparseMatrix::from_triplets(rows.len(), self.ncols, &trip).expect("indices in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }
}
