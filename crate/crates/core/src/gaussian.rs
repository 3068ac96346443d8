//! Mode-matched Gaussian approximation `π_G(x | θ, y)` of the latent
//! conditional.
//!
//! Newton iterations maximise
//! `f(x) = −½ xᵀ Q x + bᵀ x + Σ_i log π(y_i | η_i)` with `η = A x + offset`
//! (`b = Q μ` for a prior mean `μ`). Each step solves
//! `(Q + Aᵀ C A) x' = b + Aᵀ (d1 + C (η − offset))` with `C = diag(d2neg)`,
//! halves the step while the objective decreases, and, when linear
//! constraints are present, conditions every iterate on them by kriging.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihood::ObservationModel;
use crate::sparse::{constrain, factorize, CholeskyFactor, ConstraintInfo, SparseMatrix, SparsePrecision};

type NewtonSystem = (SparsePrecision, Vec<f64>, Vec<f64>, Vec<f64>);

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Convergence threshold on `‖Δx‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Lower clamp for the likelihood curvature.
    pub d2neg_floor: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-8,
            max_iter: 50,
            max_halvings: 10,
            d2neg_floor: 1e-12,
        }
    }
}

/// Gaussian approximation at one hyperparameter value.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Vec<f64>,
    /// `Q + Aᵀ diag(d2neg(mode)) A`.
    pub q_post: SparsePrecision,
    pub factor: CholeskyFactor,
    /// Marginal standard deviations, constrained when constraints apply.
    pub marg_sd: Vec<f64>,
    /// `½ log det Q_post − (n/2) log 2π`: the unconstrained log-density at the
    /// mode.
    pub log_norm_const: f64,
    pub constraint: Option<ConstraintInfo>,
    /// Log-likelihood at the mode.
    pub loglik: f64,
    /// Objective `f` at the mode.
    pub objective: f64,
    pub iterations: usize,
    /// False when some Newton step needed halving.
    pub monotone: bool,
}

impl GaussianApprox {
    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    /// Log-density of the approximation at its own mode, conditioned on the
    /// constraints when present.
    pub fn log_density_at_mode(&self) -> f64 {
        match &self.constraint {
            Some(c) => {
                let k = c.w.nrows() as f64;
                self.log_norm_const + 0.5 * k * LN_2PI + 0.5 * c.logdet_w
            }
            None => self.log_norm_const,
        }
    }
}

/// Unconstrained log-density `log N(x; mode, Q_post⁻¹)`.
pub fn log_density_at(ga: &GaussianApprox, x: &[f64]) -> Result<f64> {
    if x.len() != ga.dim() {
        return Err(Error::DimensionMismatch {
            expected: ga.dim(),
            found: x.len(),
        });
    }
    let d: Vec<f64> = x.iter().zip(&ga.mode).map(|(a, b)| a - b).collect();
    Ok(ga.log_norm_const - 0.5 * ga.q_post.quad_form(&d)?)
}

/// Fit the Gaussian approximation for prior `N(mu_prior, q_prior⁻¹)`.
pub fn fit(
    q_prior: &SparsePrecision,
    mu_prior: &[f64],
    obs: &ObservationModel,
    theta: &[f64],
    x0: &[f64],
) -> Result<GaussianApprox> {
    fit_with(q_prior, mu_prior, obs, theta, x0, None, &NewtonSettings::default())
}

/// [`fit`] with optional linear constraints `C x = 0` and explicit settings.
pub fn fit_with(
    q_prior: &SparsePrecision,
    mu_prior: &[f64],
    obs: &ObservationModel,
    theta: &[f64],
    x0: &[f64],
    constraints: Option<&DMatrix<f64>>,
    settings: &NewtonSettings,
) -> Result<GaussianApprox> {
    let n = q_prior.n();
    if mu_prior.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: mu_prior.len(),
        });
    }
    let problem = NewtonProblem {
        q: q_prior,
        b: q_prior.matvec(mu_prior)?,
        a: obs.a(),
        offset: obs.offset().to_vec(),
        obs,
        theta,
        constraints: constraints.filter(|c| c.nrows() > 0).map(|c| (c, vec![0.0; c.nrows()])),
    };
    problem.solve(x0, settings)
}

/// Maximisation problem behind [`fit_with`]; also used with a reduced
/// design for conditional (one coordinate fixed) fits.
pub(crate) struct NewtonProblem<'a> {
    pub q: &'a SparsePrecision,
    pub b: Vec<f64>,
    pub a: &'a SparseMatrix,
    pub offset: Vec<f64>,
    pub obs: &'a ObservationModel,
    pub theta: &'a [f64],
    pub constraints: Option<(&'a DMatrix<f64>, Vec<f64>)>,
}

impl NewtonProblem<'_> {
    fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut eta = self.a.matvec(x)?;
        eta.iter_mut().zip(&self.offset).for_each(|(e, o)| *e += o);
        Ok(eta)
    }

    /// `(f(x), loglik(x))`; non-finite values map to `−∞`.
    fn objective(&self, x: &[f64]) -> Result<(f64, f64)> {
        let lik = self.obs.eval_eta(&self.eta(x)?, self.theta)?.loglik;
        let prior = -0.5 * self.q.quad_form(x)? + self.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let f = prior + lik;
        Ok(if f.is_finite() { (f, lik) } else { (f64::NEG_INFINITY, lik) })
    }

    fn project(&self, x: Vec<f64>, factor: &CholeskyFactor) -> Result<(Vec<f64>, Option<ConstraintInfo>)> {
        match &self.constraints {
            Some((rows, rhs)) => {
                let (xc, info) = constrain(&x, factor, rows, rhs)?;
                Ok((xc, Some(info)))
            }
            None => Ok((x, None)),
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        match &self.constraints {
            None => true,
            Some((rows, rhs)) => (0..rows.nrows()).all(|r| {
                let v: f64 = rows.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
                (v - rhs[r]).abs() <= 1e-9 * (1.0 + rhs[r].abs())
            }),
        }
    }

    pub fn solve(&self, x0: &[f64], settings: &NewtonSettings) -> Result<GaussianApprox> {
        let n = self.q.n();
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NewtonDiverged("non-finite starting point".into()));
        }
        let mut x = x0.to_vec();
        let (mut f, _) = self.objective(&x)?;
        let mut monotone = true;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < settings.max_iter {
            iterations += 1;
            let (h, eta, d1, c) = self.newton_system(&x, settings.d2neg_floor)?;
            let factor = factorize(&h)?;
            let work: Vec<f64> = (0..eta.len())
                .map(|r| d1[r] + c[r] * (eta[r] - self.offset[r]))
                .collect();
            let mut rhs = self.a.tr_matvec(&work)?;
            rhs.iter_mut().zip(&self.b).for_each(|(r, b)| *r += b);
            let (target, _) = self.project(factor.solve(&rhs)?, &factor)?;

            let step: Vec<f64> = target.iter().zip(&x).map(|(t, s)| t - s).collect();
            let mut t = 1.0;
            let mut cand = target;
            let (mut f_new, _) = self.objective(&cand)?;
            // an infeasible start cannot be compared with the projected iterate
            if self.feasible(&x) {
                let slack = 1e-12 * (1.0 + f.abs());
                let mut halvings = 0;
                while f_new < f - slack {
                    if halvings == settings.max_halvings {
                        return Err(Error::NewtonDiverged(format!(
                            "objective decreased after {halvings} step halvings at iteration {iterations}"
                        )));
                    }
                    halvings += 1;
                    monotone = false;
                    t *= 0.5;
                    cand = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                    f_new = self.objective(&cand)?.0;
                }
            }
            let dx = step.iter().fold(0.0f64, |m, s| m.max((t * s).abs()));
            x = cand;
            f = f_new;
            if !f.is_finite() {
                return Err(Error::NewtonDiverged("objective is not finite".into()));
            }
            if dx <= settings.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged(format!(
                "no convergence in {} iterations",
                settings.max_iter
            )));
        }

        let (q_post, _, _, _) = self.newton_system(&x, settings.d2neg_floor)?;
        let factor = factorize(&q_post)?;
        let (_, constraint) = match &self.constraints {
            Some(_) => self.project(x.clone(), &factor)?,
            None => (Vec::new(), None),
        };
        let mut var = factor.marginal_variances();
        if let Some(info) = &constraint {
            var = info.constrained_variances(&var);
        }
        let (objective, loglik) = self.objective(&x)?;
        let log_norm_const = 0.5 * factor.logdet() - 0.5 * n as f64 * LN_2PI;
        Ok(GaussianApprox {
            mode: x,
            marg_sd: var.into_iter().map(f64::sqrt).collect(),
            q_post,
            factor,
            log_norm_const,
            constraint,
            loglik,
            objective,
            iterations,
            monotone,
        })
    }

    /// Hessian, predictor, first derivatives and clamped curvatures at `x`.
    fn newton_system(&self, x: &[f64], floor: f64) -> Result<NewtonSystem> {
        let eta = self.eta(x)?;
        let ev = self.obs.eval_eta(&eta, self.theta)?;
        let c: Vec<f64> = ev
            .d2neg
            .iter()
            .zip(self.obs.responses())
            .map(|(&d, resp)| if resp.is_some() { d.max(floor) } else { 0.0 })
            .collect();
        let h = self.q.add(&self.a.weighted_gram(&c)?)?;
        Ok((h, eta, ev.d1, c))
    }
}
