use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{minimum_degree, takahashi, SparsePrecision};
use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot at or below `PD_TOLERANCE * max(diag Q)`
/// is reported as [`Error::NotPositiveDefinite`].
pub const PD_TOLERANCE: f64 = 1e-12;

/// Below this dimension [`Ordering::Auto`] keeps the natural order.
const NATURAL_ORDER_BELOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    MinimumDegree,
    /// Natural order for small matrices, minimum degree otherwise.
    #[default]
    Auto,
}

/// Sparse Cholesky factor `P Q Pᵀ = L Lᵀ`.
///
/// `L` is lower triangular in compressed-column form with the diagonal first
/// in each column and row indices increasing. Immutable once built.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    pub(super) col_ptr: Vec<usize>,
    pub(super) row_idx: Vec<usize>,
    pub(super) values: Vec<f64>,
    logdet: f64,
}

/// Factorize with the default ordering.
pub fn factorize(q: &SparsePrecision) -> Result<CholeskyFactor> {
    CholeskyFactor::new(q, Ordering::Auto)
}

impl CholeskyFactor {
    pub fn new(q: &SparsePrecision, ordering: Ordering) -> Result<Self> {
        let n = q.n();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::MinimumDegree => minimum_degree(q),
            Ordering::Auto if n < NATURAL_ORDER_BELOW => (0..n).collect(),
            Ordering::Auto => minimum_degree(q),
        };
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let upper = permuted_upper(q, &iperm);
        let parent = etree(&upper);
        let counts = column_counts(&upper, &parent);
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];

        let tol = PD_TOLERANCE * q.max_diag();
        let mut next = col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];

        // up-looking: row k of L from a sparse triangular solve
        for k in 0..n {
            let top = ereach(&upper, k, &parent, &mut stack, &mut mark);
            for p in upper.col_ptr[k]..upper.col_ptr[k + 1] {
                x[upper.row_idx[p]] = upper.values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > tol) {
                return Err(Error::NotPositiveDefinite {
                    column: perm[k],
                    pivot: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        // columns were filled diagonal-first, then rows in increasing k
        debug_assert!((0..n).all(|k| next[k] == col_ptr[k + 1]));
        let mut sorted_rows = row_idx;
        let mut sorted_vals = values;
        for k in 0..n {
            sort_column(&mut sorted_rows, &mut sorted_vals, col_ptr[k], col_ptr[k + 1]);
        }

        let logdet = 2.0 * (0..n).map(|k| sorted_vals[col_ptr[k]].ln()).sum::<f64>();
        Ok(CholeskyFactor {
            n,
            perm,
            iperm,
            col_ptr,
            row_idx: sorted_rows,
            values: sorted_vals,
            logdet,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `perm[new] = old`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `log det Q = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn l_diag(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| self.values[self.col_ptr[k]])
    }

    /// Dense `L` in the permuted ordering.
    pub fn l_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut l = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                l[(self.row_idx[p], j)] = self.values[p];
            }
        }
        l
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }

    /// Solve `L y = b` in place (permuted ordering).
    fn forward(&self, x: &mut [f64]) {
        for j in 0..self.n {
            let p0 = self.col_ptr[j];
            x[j] /= self.values[p0];
            let xj = x[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                x[self.row_idx[p]] -= self.values[p] * xj;
            }
        }
    }

    /// Solve `Lᵀ y = b` in place (permuted ordering).
    fn backward(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            let p0 = self.col_ptr[j];
            let mut s = x[j];
            for p in p0 + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = s / self.values[p0];
        }
    }

    /// Solve `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        Ok((0..self.n).map(|old| y[self.iperm[old]]).collect())
    }

    /// Draw from `N(mean, Q⁻¹)` as `mean + Pᵀ L⁻ᵀ z`, seeded.
    pub fn sample(&self, mean: &[f64], seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(mean, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_len(mean.len())?;
        let mut z: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(rng)).collect();
        self.backward(&mut z);
        Ok((0..self.n).map(|old| mean[old] + z[self.iperm[old]]).collect())
    }

    /// `diag(Q⁻¹)`; dense inversion up to [`takahashi::DENSE_THRESHOLD`],
    /// partial inversion over the factor pattern above it.
    pub fn marginal_variances(&self) -> Vec<f64> {
        if self.n <= takahashi::DENSE_THRESHOLD {
            self.marginal_variances_dense()
        } else {
            self.marginal_variances_partial()
        }
    }

    /// Diagonal of the inverse by one solve per unit vector.
    pub fn marginal_variances_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut e = vec![0.0; self.n];
        for k in 0..self.n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.forward(&mut e);
            // ‖L⁻¹ e_k‖² is the k-th diagonal of the permuted inverse
            out[self.perm[k]] = e.iter().map(|v| v * v).sum();
        }
        out
    }

    /// Diagonal of the inverse via the Takahashi recursion.
    pub fn marginal_variances_partial(&self) -> Vec<f64> {
        let sigma = takahashi::selected_inverse(self);
        let mut out = vec![0.0; self.n];
        for k in 0..self.n {
            out[self.perm[k]] = sigma[self.col_ptr[k]];
        }
        out
    }
}

fn sort_column(rows: &mut [usize], vals: &mut [f64], start: usize, end: usize) {
    if rows[start..end].windows(2).all(|w| w[0] < w[1]) {
        return;
    }
    let mut pairs: Vec<(usize, f64)> = rows[start..end]
        .iter()
        .copied()
        .zip(vals[start..end].iter().copied())
        .collect();
    pairs.sort_by_key(|p| p.0);
    for (k, (r, v)) in pairs.into_iter().enumerate() {
        rows[start + k] = r;
        vals[start + k] = v;
    }
}

/// Upper triangle of `P Q Pᵀ` in compressed-column form.
struct Upper {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(q: &SparsePrecision, iperm: &[usize]) -> Upper {
    let n = q.n();
    let mut count = vec![0usize; n + 1];
    let mapped: Vec<(usize, usize, f64)> = q
        .iter()
        .map(|(i, j, v)| {
            let (a, b) = (iperm[i], iperm[j]);
            if a <= b {
                (a, b, v)
            } else {
                (b, a, v)
            }
        })
        .collect();
    for &(_, c, _) in &mapped {
        count[c + 1] += 1;
    }
    for c in 0..n {
        count[c + 1] += count[c];
    }
    let mut next = count[..n].to_vec();
    let mut row_idx = vec![0; mapped.len()];
    let mut values = vec![0.0; mapped.len()];
    for (r, c, v) in mapped {
        row_idx[next[c]] = r;
        values[next[c]] = v;
        next[c] += 1;
    }
    Upper {
        col_ptr: count,
        row_idx,
        values,
    }
}

/// Elimination tree of a symmetric matrix given by its upper triangle.
fn etree(a: &Upper) -> Vec<Option<usize>> {
    let n = a.col_ptr.len() - 1;
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for p in a.col_ptr[k]..a.col_ptr[k + 1] {
            let mut i = Some(a.row_idx[p]);
            while let Some(node) = i {
                if node >= k {
                    break;
                }
                let inext = ancestor[node];
                ancestor[node] = Some(k);
                if inext.is_none() {
                    parent[node] = Some(k);
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L`, written to `stack[top..]` in
/// topological order. `mark` must hold no entry equal to `k` on entry.
fn ereach(a: &Upper, k: usize, parent: &[Option<usize>], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for p in a.col_ptr[k]..a.col_ptr[k + 1] {
        let mut i = a.row_idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            match parent[i] {
                Some(pi) => i = pi,
                None => break,
            }
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

fn column_counts(a: &Upper, parent: &[Option<usize>]) -> Vec<usize> {
    let n = parent.len();
    let mut counts = vec![1usize; n];
    let mut stack = vec![0usize; n];
    let mut mark = vec![usize::MAX; n];
    for k in 0..n {
        let top = ereach(a, k, parent, &mut stack, &mut mark);
        for &i in &stack[top..] {
            counts[i] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn two_by_two() -> SparsePrecision {
        SparsePrecision::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap()
    }

    #[test]
    fn identity_factor() {
        let f = factorize(&SparsePrecision::identity(3)).unwrap();
        assert_eq!(f.logdet(), 0.0);
        assert_eq!(f.l_dense(), DMatrix::identity(3, 3));
    }

    #[test]
    fn two_by_two_logdet_and_solve() {
        let f = factorize(&two_by_two()).unwrap();
        assert!((f.logdet() - 3f64.ln()).abs() < 1e-14);
        let x = f.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let v = f.marginal_variances();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-14 && (v[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn identity_solve() {
        let f = factorize(&SparsePrecision::identity(2)).unwrap();
        assert_eq!(f.solve(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(factorize(&SparsePrecision::identity(4)).unwrap().marginal_variances(), vec![1.0; 4]);
    }

    #[test]
    fn solve_checks_length() {
        let f = factorize(&SparsePrecision::identity(2)).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_matrix_is_rejected() {
        // rw1 structure without jitter has a constant null vector
        let q = SparsePrecision::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])).unwrap();
        assert!(matches!(factorize(&q), Err(Error::NotPositiveDefinite { .. })));
        let neg = SparsePrecision::diagonal(&[1.0, -1.0]);
        assert!(matches!(factorize(&neg), Err(Error::NotPositiveDefinite { column: 1, .. })));
    }

    #[test]
    fn seeded_sample_is_reproducible() {
        let f = factorize(&SparsePrecision::identity(1)).unwrap();
        let a = f.sample(&[5.0], 7).unwrap();
        let b = f.sample(&[5.0], 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, f.sample(&[5.0], 8).unwrap());
    }

    #[test]
    fn min_degree_and_natural_agree() {
        // tridiagonal of size 80 crosses the natural-order cutoff
        let n = 80;
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 3.0)).collect();
        t.extend((1..n).map(|i| (i, i - 1, -1.0)));
        let q = SparsePrecision::from_triplets(n, &t).unwrap();
        let a = CholeskyFactor::new(&q, Ordering::Natural).unwrap();
        let b = CholeskyFactor::new(&q, Ordering::MinimumDegree).unwrap();
        assert!((a.logdet() - b.logdet()).abs() < 1e-10);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let xa = a.solve(&rhs).unwrap();
        let xb = b.solve(&rhs).unwrap();
        assert!(xa.iter().zip(&xb).all(|(u, v)| (u - v).abs() < 1e-12));
    }
}
