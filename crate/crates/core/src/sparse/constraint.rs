use nalgebra::{DMatrix, DVector};

use super::CholeskyFactor;
use crate::error::{Error, Result};

/// Quantities from conditioning `x ~ N(μ, Q⁻¹)` on `A x = e`.
#[derive(Debug, Clone)]
pub struct ConstraintInfo {
    /// `V = Q⁻¹ Aᵀ`, n × k.
    pub v: DMatrix<f64>,
    /// `W = A Q⁻¹ Aᵀ`, k × k.
    pub w: DMatrix<f64>,
    /// `log det W`.
    pub logdet_w: f64,
    /// `log N(e; A μ, W)`: the density of `A x` at the constraint value under
    /// the unconstrained Gaussian. Subtract it from the unconstrained
    /// log-density to evaluate the constrained one at a point with `A x = e`.
    pub log_density_at_rhs: f64,
    /// Reduction of each marginal variance, `diag(V W⁻¹ Vᵀ)`.
    pub variance_reduction: Vec<f64>,
}

impl ConstraintInfo {
    /// Constrained marginal variances from unconstrained ones.
    pub fn constrained_variances(&self, unconstrained: &[f64]) -> Vec<f64> {
        unconstrained
            .iter()
            .zip(&self.variance_reduction)
            .map(|(v, r)| (v - r).max(0.0))
            .collect()
    }
}

/// Condition `N(mean, Q⁻¹)` on `rows · x = rhs` by kriging:
/// `μ − V W⁻¹ (A μ − e)`.
pub fn constrain(
    mean: &[f64],
    factor: &CholeskyFactor,
    rows: &DMatrix<f64>,
    rhs: &[f64],
) -> Result<(Vec<f64>, ConstraintInfo)> {
    let n = factor.n();
    let k = rows.nrows();
    if mean.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: mean.len(),
        });
    }
    if rows.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rows.ncols(),
        });
    }
    if rhs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: rhs.len(),
        });
    }
    if k > n {
        return Err(Error::SingularConstraint);
    }

    let mut v = DMatrix::zeros(n, k);
    for r in 0..k {
        let row: Vec<f64> = rows.row(r).iter().copied().collect();
        let col = factor.solve(&row)?;
        v.set_column(r, &DVector::from_vec(col));
    }
    let w = rows * &v;
    let w = (&w + w.transpose()) * 0.5;
    let chol = w.clone().cholesky().ok_or(Error::SingularConstraint)?;
    let pivots = chol.l().diagonal();
    let max_w = w.diagonal().max();
    if pivots.iter().any(|d| d * d <= 1e-12 * max_w) {
        return Err(Error::SingularConstraint);
    }
    let logdet_w = 2.0 * pivots.iter().map(|d| d.ln()).sum::<f64>();
    if !logdet_w.is_finite() {
        return Err(Error::SingularConstraint);
    }

    let mu = DVector::from_column_slice(mean);
    let resid = rows * &mu - DVector::from_column_slice(rhs);
    let alpha = chol.solve(&resid);
    let corrected = &mu - &v * &alpha;

    let log_density_at_rhs = -0.5 * (k as f64) * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * logdet_w
        - 0.5 * resid.dot(&alpha);

    // diag(V W⁻¹ Vᵀ) = row sums of V ∘ (V W⁻¹)
    let v_winv = chol.solve(&v.transpose()).transpose();
    let variance_reduction = (0..n)
        .map(|i| (0..k).map(|r| v[(i, r)] * v_winv[(i, r)]).sum())
        .collect();

    Ok((
        corrected.as_slice().to_vec(),
        ConstraintInfo {
            v,
            w,
            logdet_w,
            log_density_at_rhs,
            variance_reduction,
        },
    ))
}

/// Condition on `rows · x = 0`.
pub fn constrain_sum_to_zero(
    mean: &[f64],
    factor: &CholeskyFactor,
    rows: &DMatrix<f64>,
) -> Result<(Vec<f64>, ConstraintInfo)> {
    constrain(mean, factor, rows, &vec![0.0; rows.nrows()])
}
