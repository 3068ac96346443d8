//! Observation models: per-row log-likelihoods with their first two
//! derivatives in the linear predictor, and the multi-likelihood data layout.
//!
//! Responses are kept as an N × F matrix with at most one non-missing entry
//! per row; the column of that entry selects the likelihood family. Rows with
//! no response are prediction rows and contribute nothing.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-likelihood of one observation and its derivatives in `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval {
    pub loglik: f64,
    /// `∂/∂η log π(y | η)`
    pub d1: f64,
    /// `−∂²/∂η² log π(y | η)`
    pub d2neg: f64,
}

/// Summed log-likelihood with per-row derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub loglik: f64,
    pub d1: Vec<f64>,
    pub d2neg: Vec<f64>,
}

pub fn loglik_gaussian(y: f64, eta: f64, log_prec: f64) -> PointEval {
    let tau = log_prec.exp();
    let r = y - eta;
    PointEval {
        loglik: 0.5 * (log_prec - LN_2PI) - 0.5 * tau * r * r,
        d1: tau * r,
        d2neg: tau,
    }
}

fn check_count(y: f64, n: f64) -> Result<()> {
    let integral = |v: f64| v.is_finite() && v >= 0.0 && v.fract() == 0.0;
    if !integral(y) || !integral(n) || y > n {
        return Err(Error::InvalidCount { y, n });
    }
    Ok(())
}

/// `log(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn ln_factorial(k: f64) -> f64 {
    if k < 2.0 {
        0.0
    } else {
        ln_gamma(k + 1.0)
    }
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial with logit link: `p = 1 / (1 + e^{−η})`.
pub fn loglik_binomial_logit(y: f64, n: f64, eta: f64) -> Result<PointEval> {
    check_count(y, n)?;
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    let mut loglik = ln_choose(n, y);
    if y > 0.0 {
        loglik -= y * softplus(-eta);
    }
    if n - y > 0.0 {
        loglik -= (n - y) * softplus(eta);
    }
    Ok(PointEval {
        loglik,
        d1: y - n * p,
        d2neg: n * p * (1.0 - p),
    })
}

/// Poisson with log link: `λ = e^{η + offset}`.
pub fn loglik_poisson(y: f64, eta: f64, offset: f64) -> Result<PointEval> {
    check_count(y, y)?;
    let lambda = (eta + offset).exp();
    Ok(PointEval {
        loglik: y * (eta + offset) - lambda - ln_factorial(y),
        d1: y - lambda,
        d2neg: lambda,
    })
}

/// `η = A x + offset`.
pub fn predictor(a: &SparseMatrix, x: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
    if offset.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: offset.len(),
        });
    }
    let mut eta = a.matvec(x)?;
    eta.iter_mut().zip(offset).for_each(|(e, o)| *e += o);
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link; `precision` is the log-precision hyper slot.
    Gaussian { precision: usize },
    Binomial,
    Poisson,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Gaussian { .. } => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    /// Evaluate at the full linear predictor (offset already included).
    pub fn eval(&self, y: f64, ntrials: f64, eta: f64, theta: &[f64]) -> Result<PointEval> {
        match *self {
            Family::Gaussian { precision } => {
                let log_prec = *theta.get(precision).ok_or(Error::UnknownHyperSlot {
                    slot: precision,
                    len: theta.len(),
                })?;
                Ok(loglik_gaussian(y, eta, log_prec))
            }
            Family::Binomial => loglik_binomial_logit(y, ntrials, eta),
            Family::Poisson => loglik_poisson(y, eta, 0.0),
        }
    }
}

/// Data, families and observation matrix of a latent Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    families: Vec<Family>,
    y_matrix: Vec<Vec<Option<f64>>>,
    ntrials: Vec<f64>,
    offset: Vec<f64>,
    a: SparseMatrix,
    responses: Vec<Option<(usize, f64)>>,
}

impl ObservationModel {
    /// `y_matrix` is N × F; `ntrials` and `offset` have one entry per row.
    pub fn new(
        families: Vec<Family>,
        y_matrix: Vec<Vec<Option<f64>>>,
        ntrials: Vec<f64>,
        offset: Vec<f64>,
        a: SparseMatrix,
    ) -> Result<Self> {
        let n = y_matrix.len();
        for len in [ntrials.len(), offset.len(), a.nrows()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut responses = Vec::with_capacity(n);
        for (r, row) in y_matrix.iter().enumerate() {
            if row.len() != families.len() {
                return Err(Error::DimensionMismatch {
                    expected: families.len(),
                    found: row.len(),
                }
                .at_row(r));
            }
            let mut present = row.iter().enumerate().filter_map(|(c, v)| v.map(|y| (c, y)));
            let first = present.next();
            if present.next().is_some() {
                return Err(Error::ResponseOverlap { row: r });
            }
            if let Some((c, y)) = first {
                // validate counts up front so evaluation errors are only numeric
                match families[c] {
                    Family::Binomial => check_count(y, ntrials[r]).map_err(|e| e.at_row(r))?,
                    Family::Poisson => check_count(y, y).map_err(|e| e.at_row(r))?,
                    Family::Gaussian { .. } if !y.is_finite() => {
                        return Err(Error::DomainError(format!("non-finite response {y}")).at_row(r))
                    }
                    Family::Gaussian { .. } => {}
                }
                if a.row(r).next().is_none() {
                    return Err(Error::DomainError("observed row has an empty predictor".into()).at_row(r));
                }
            }
            responses.push(first);
        }
        Ok(ObservationModel {
            families,
            y_matrix,
            ntrials,
            offset,
            a,
            responses,
        })
    }

    /// Single-family model with every row observed.
    pub fn single(family: Family, y: &[f64], a: SparseMatrix) -> Result<Self> {
        let n = y.len();
        Self::new(
            vec![family],
            y.iter().map(|&v| vec![Some(v)]).collect(),
            vec![1.0; n],
            vec![0.0; n],
            a,
        )
    }

    pub fn with_ntrials(self, ntrials: Vec<f64>) -> Result<Self> {
        Self::new(self.families, self.y_matrix, ntrials, self.offset, self.a)
    }

    pub fn with_offset(self, offset: Vec<f64>) -> Result<Self> {
        Self::new(self.families, self.y_matrix, self.ntrials, offset, self.a)
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn y_matrix(&self) -> &[Vec<Option<f64>>] {
        &self.y_matrix
    }

    pub fn ntrials(&self) -> &[f64] {
        &self.ntrials
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn n_rows(&self) -> usize {
        self.y_matrix.len()
    }

    /// `(family column, value)` of each row, `None` for prediction rows.
    pub fn responses(&self) -> &[Option<(usize, f64)>] {
        &self.responses
    }

    /// Latent dimension this model's `A` expects.
    pub fn latent_dim(&self) -> usize {
        self.a.ncols()
    }

    /// Likelihood at a linear predictor `η` (offset included).
    pub fn eval_eta(&self, eta: &[f64], theta: &[f64]) -> Result<LikelihoodEval> {
        if eta.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                found: eta.len(),
            });
        }
        let n = self.n_rows();
        let mut out = LikelihoodEval {
            loglik: 0.0,
            d1: vec![0.0; n],
            d2neg: vec![0.0; n],
        };
        for (r, resp) in self.responses.iter().enumerate() {
            let Some((c, y)) = *resp else { continue };
            let e = self.families[c]
                .eval(y, self.ntrials[r], eta[r], theta)
                .map_err(|e| e.at_row(r))?;
            out.loglik += e.loglik;
            out.d1[r] = e.d1;
            out.d2neg[r] = e.d2neg;
        }
        Ok(out)
    }

    pub fn predictor(&self, x: &[f64]) -> Result<Vec<f64>> {
        predictor(&self.a, x, &self.offset)
    }
}

/// Log-likelihood of the whole data set at latent field `x`.
pub fn total_loglik(obs: &ObservationModel, x: &[f64], theta: &[f64]) -> Result<LikelihoodEval> {
    obs.eval_eta(&obs.predictor(x)?, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let e = loglik_gaussian(0.0, 0.0, 0.0);
        assert!((e.loglik + 0.5 * LN_2PI).abs() < 1e-15);
        assert_eq!(loglik_gaussian(2.0, 2.0, 1.3).d1, 0.0);
        let e = loglik_gaussian(1.0, 0.0, 4f64.ln());
        assert!((e.loglik - (0.5 * (4f64.ln() - LN_2PI) - 2.0)).abs() < 1e-14);
        assert!((e.d2neg - 4.0).abs() < 1e-14);
    }

    #[test]
    fn binomial_values() {
        let e = loglik_binomial_logit(1.0, 1.0, 0.0).unwrap();
        assert!((e.loglik - 0.5f64.ln()).abs() < 1e-15);
        assert!((e.d2neg - 0.25).abs() < 1e-15);
        let e = loglik_binomial_logit(0.0, 1.0, -800.0).unwrap();
        assert!(e.loglik.abs() < 1e-300 && e.loglik.is_finite());
        assert!(matches!(loglik_binomial_logit(3.0, 2.0, 0.0), Err(Error::InvalidCount { .. })));
        assert!(matches!(loglik_binomial_logit(0.5, 2.0, 0.0), Err(Error::InvalidCount { .. })));
    }

    #[test]
    fn poisson_values() {
        let e = loglik_poisson(2.0, 0.0, 0.0).unwrap();
        assert!((e.loglik - (-1.0 - 2f64.ln())).abs() < 1e-14);
        let e = loglik_poisson(0.0, 0.0, 0.0).unwrap();
        assert_eq!((e.loglik, e.d1, e.d2neg), (-1.0, -1.0, 1.0));
        assert!(matches!(loglik_poisson(-1.0, 0.0, 0.0), Err(Error::InvalidCount { .. })));
    }

    #[test]
    fn predictor_adds_offset() {
        let a = SparseMatrix::identity(2);
        assert_eq!(predictor(&a, &[1.0, 2.0], &[0.5, -1.0]).unwrap(), vec![1.5, 1.0]);
        assert!(matches!(predictor(&a, &[1.0], &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn all_missing_is_zero() {
        let obs = ObservationModel::new(
            vec![Family::Poisson],
            vec![vec![None], vec![None]],
            vec![1.0; 2],
            vec![0.0; 2],
            SparseMatrix::identity(2),
        )
        .unwrap();
        let e = total_loglik(&obs, &[0.3, -0.2], &[]).unwrap();
        assert_eq!(e.loglik, 0.0);
        assert_eq!(e.d1, vec![0.0, 0.0]);
        assert_eq!(e.d2neg, vec![0.0, 0.0]);
    }

    #[test]
    fn overlapping_responses_rejected() {
        let r = ObservationModel::new(
            vec![Family::Poisson, Family::Poisson],
            vec![vec![Some(1.0), Some(2.0)]],
            vec![1.0],
            vec![0.0],
            SparseMatrix::identity(1),
        );
        assert!(matches!(r, Err(Error::ResponseOverlap { row: 0 })));
    }

    #[test]
    fn bad_count_reports_row() {
        let r = ObservationModel::single(Family::Poisson, &[1.0, 2.5], SparseMatrix::identity(2));
        match r {
            Err(Error::Row { row: 1, source }) => assert!(matches!(*source, Error::InvalidCount { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }
}
