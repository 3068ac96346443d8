use nalgebra::{DMatrix, DVector};

use super::{log_post_theta, EngineSettings, Model};
use crate::error::{Error, Result};
use crate::gaussian::GaussianApprox;

const GRAD_TOL: f64 = 1e-6;
const STEP_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;
const MAX_STEP: f64 = 4.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

/// Posterior mode of the hyperparameters and the curvature there.
#[derive(Debug, Clone)]
pub struct ThetaMode {
    pub theta: Vec<f64>,
    pub log_post: f64,
    pub approx: GaussianApprox,
    /// Negative Hessian of `log π(θ | y)` at the mode, symmetrised.
    pub hessian: DMatrix<f64>,
    /// The finite-difference Hessian was not positive definite and was
    /// replaced by the absolute values of its diagonal.
    pub hessian_fallback: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

struct Objective<'a> {
    model: &'a Model,
    settings: &'a EngineSettings,
    x0: Vec<f64>,
}

impl Objective<'_> {
    /// Log-posterior, `−∞` where the inner fit fails.
    fn value(&self, theta: &[f64]) -> f64 {
        log_post_theta(self.model, theta, Some(&self.x0), self.settings).map_or(f64::NEG_INFINITY, |(v, _)| v)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let h = self.settings.fd_step;
        let mut g = vec![0.0; theta.len()];
        let mut t = theta.to_vec();
        for j in 0..theta.len() {
            t[j] = theta[j] + h;
            let up = self.value(&t);
            t[j] = theta[j] - h;
            let down = self.value(&t);
            t[j] = theta[j];
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::OptimDiverged(format!(
                    "log posterior not finite next to theta = {theta:?}"
                )));
            }
            g[j] = (up - down) / (2.0 * h);
        }
        Ok(g)
    }

    /// Central-difference Hessian of the log-posterior, symmetrised.
    fn hessian(&self, theta: &[f64], f0: f64) -> Result<DMatrix<f64>> {
        let d = theta.len();
        let h = self.settings.fd_step;
        let mut out = DMatrix::zeros(d, d);
        let at = |shift: &[(usize, f64)]| {
            let mut t = theta.to_vec();
            for &(j, s) in shift {
                t[j] += s;
            }
            self.value(&t)
        };
        for j in 0..d {
            let v = (at(&[(j, h)]) - 2.0 * f0 + at(&[(j, -h)])) / (h * h);
            out[(j, j)] = v;
            for k in 0..j {
                let v = (at(&[(j, h), (k, h)]) - at(&[(j, h), (k, -h)]) - at(&[(j, -h), (k, h)])
                    + at(&[(j, -h), (k, -h)]))
                    / (4.0 * h * h);
                out[(j, k)] = v;
                out[(k, j)] = v;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::OptimDiverged("non-finite Hessian at the mode".into()));
        }
        Ok(out)
    }
}

/// Maximise `log π(θ | y)` by BFGS with central finite-difference gradients,
/// then compute the negative Hessian at the maximiser.
pub fn optimize_theta(model: &Model, theta_init: &[f64], settings: &EngineSettings) -> Result<ThetaMode> {
    if theta_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimDiverged("non-finite initial hyperparameters".into()));
    }
    let (f0, ga0) = log_post_theta(model, theta_init, None, settings)
        .map_err(|e| Error::OptimDiverged(format!("initial evaluation failed: {e}")))?;
    let d = theta_init.len();
    let mut warnings = Vec::new();
    let mut obj = Objective {
        model,
        settings,
        x0: ga0.mode.clone(),
    };
    let mut theta = DVector::from_column_slice(theta_init);
    let mut f = f0;
    let mut iterations = 0;

    if d > 0 {
        let mut g = DVector::from_vec(obj.gradient(theta.as_slice())?);
        // inverse Hessian approximation of −log π
        let mut hinv = DMatrix::<f64>::identity(d, d);
        let mut scaled = false;
        loop {
            if g.amax() <= GRAD_TOL {
                break;
            }
            if iterations == MAX_ITER {
                warnings.push(format!(
                    "hyperparameter optimiser stopped after {MAX_ITER} iterations with gradient {:e}",
                    g.amax()
                ));
                break;
            }
            iterations += 1;
            // ascent direction for log π
            let mut p = &hinv * &g;
            if p.dot(&g) <= 0.0 {
                hinv = DMatrix::identity(d, d);
                p = g.clone();
            }
            let norm = p.amax();
            if norm > MAX_STEP {
                p *= MAX_STEP / norm;
            }
            let slope = p.dot(&g);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let cand = &theta + &p * t;
                let fc = obj.value(cand.as_slice());
                if fc.is_finite() && fc >= f + ARMIJO * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                if hinv != DMatrix::identity(d, d) {
                    hinv = DMatrix::identity(d, d);
                    scaled = false;
                    continue;
                }
                // below this the finite-difference gradient is mostly noise
                if g.amax() > 1e-3 {
                    warnings.push(format!(
                        "line search failed at theta = {:?} with gradient {:e}",
                        theta.as_slice(),
                        g.amax()
                    ));
                }
                break;
            };
            let s = &cand - &theta;
            theta = cand;
            f = fc;
            if let Ok((_, ga)) = log_post_theta(model, theta.as_slice(), Some(&obj.x0), settings) {
                obj.x0 = ga.mode;
            }
            let g_new = DVector::from_vec(obj.gradient(theta.as_slice())?);
            // curvature pair for the minimisation of −log π
            let y = &g - &g_new;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                if !scaled {
                    hinv = DMatrix::identity(d, d) * (sy / y.dot(&y));
                    scaled = true;
                }
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(d, d);
                let left = &i - (&s * y.transpose()) * rho;
                let right = &i - (&y * s.transpose()) * rho;
                hinv = &left * &hinv * &right + (&s * s.transpose()) * rho;
            }
            g = g_new;
            if s.amax() <= STEP_TOL {
                break;
            }
        }
    }

    let (log_post, approx) = log_post_theta(model, theta.as_slice(), Some(&obj.x0), settings)
        .map_err(|e| Error::OptimDiverged(format!("evaluation at the optimum failed: {e}")))?;
    obj.x0 = approx.mode.clone();
    let mut hessian = -obj.hessian(theta.as_slice(), log_post)?;
    let mut hessian_fallback = false;
    if d > 0 && hessian.clone().cholesky().is_none() {
        hessian_fallback = true;
        warnings.push("negative Hessian at the mode is not positive definite; using |diag|".into());
        let diag: Vec<f64> = hessian
            .diagonal()
            .iter()
            .map(|v| if v.abs() > 1e-8 { v.abs() } else { 1.0 })
            .collect();
        hessian = DMatrix::from_diagonal(&DVector::from_vec(diag));
    }
    Ok(ThetaMode {
        theta: theta.as_slice().to_vec(),
        log_post,
        approx,
        hessian,
        hessian_fallback,
        iterations,
        warnings,
    })
}
