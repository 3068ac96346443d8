use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension the dense reference accepts.
pub const DENSE_MAX: usize = 50;

/// Dense counterparts of the sparse operations.
#[derive(Debug, Clone)]
pub enum DenseOp<'a> {
    Factorize(&'a DMatrix<f64>),
    Solve(&'a DMatrix<f64>, &'a DVector<f64>),
    MarginalVariances(&'a DMatrix<f64>),
    Kronecker(&'a DMatrix<f64>, &'a DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseOutput {
    /// Unpermuted lower Cholesky factor and `log det`.
    Factor { l: DMatrix<f64>, logdet: f64 },
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() > DENSE_MAX {
        return Err(Error::GuardExceeded {
            dim: m.nrows(),
            max: DENSE_MAX,
        });
    }
    Ok(m.nrows())
}

fn cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().ok_or(Error::NotPositiveDefinite { column: 0, pivot: 0.0 })
}

/// Evaluate `op` with plain dense linear algebra.
pub fn dense_reference(op: DenseOp<'_>) -> Result<DenseOutput> {
    match op {
        DenseOp::Factorize(q) => {
            check_square(q)?;
            let c = cholesky(q)?;
            let l = c.l();
            let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Ok(DenseOutput::Factor { l, logdet })
        }
        DenseOp::Solve(q, b) => {
            let n = check_square(q)?;
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: b.len(),
                });
            }
            Ok(DenseOutput::Vector(cholesky(q)?.solve(b)))
        }
        DenseOp::MarginalVariances(q) => {
            check_square(q)?;
            Ok(DenseOutput::Vector(cholesky(q)?.inverse().diagonal()))
        }
        DenseOp::Kronecker(a, b) => {
            check_square(a)?;
            check_square(b)?;
            Ok(DenseOutput::Matrix(a.kronecker(b)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_identity_out() {
        let i = DMatrix::<f64>::identity(4, 4);
        match dense_reference(DenseOp::Factorize(&i)).unwrap() {
            DenseOutput::Factor { l, logdet } => {
                assert_eq!(l, i);
                assert_eq!(logdet, 0.0);
            }
            other => panic!("{other:?}"),
        }
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(dense_reference(DenseOp::Solve(&i, &b)).unwrap(), DenseOutput::Vector(b));
        assert_eq!(
            dense_reference(DenseOp::MarginalVariances(&i)).unwrap(),
            DenseOutput::Vector(DVector::from_element(4, 1.0))
        );
    }

    #[test]
    fn rejects_51() {
        let m = DMatrix::<f64>::identity(51, 51);
        assert!(matches!(
            dense_reference(DenseOp::Factorize(&m)),
            Err(Error::GuardExceeded { dim: 51, max: 50 })
        ));
    }
}
