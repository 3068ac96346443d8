use nalgebra::DMatrix;

use super::marginal::{linspace, norm_logpdf, Component, Mixture};
use super::{EngineSettings, GridPoint, Marginal, Model, ThetaGrid};
use crate::error::{Error, Result};
use crate::gaussian::NewtonProblem;
use crate::latent::assemble_prior;
use crate::par;
use crate::sparse::SparsePrecision;

/// Laplace-strategy marginal of latent index `i`.
///
/// For every grid point the log of `π(x, θ, y) / π_G(x₋ᵢ | xᵢ, θ, y)` is
/// evaluated on a grid of `xᵢ` values, each with its own conditional Newton
/// fit. The result, written as the Gaussian marginal times a piecewise-linear
/// log correction, is normalised per grid point and mixed with the grid
/// weights. Support values whose conditional fit fails are skipped.
pub fn latent_marginal_laplace(i: usize, model: &Model, grid: &ThetaGrid, settings: &EngineSettings) -> Result<Marginal> {
    let n = model.latent.total_dim();
    guard(n, settings)?;
    if i >= n {
        return Err(Error::DimensionMismatch { expected: n, found: i });
    }
    let components = grid
        .points
        .iter()
        .map(|p| tilted_component(i, model, p, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mixture { components }.to_marginal(settings.support_points, settings.support_width))
}

/// [`latent_marginal_laplace`] for every latent index, in parallel over
/// `(index, grid point)` pairs.
pub fn latent_marginals_laplace(model: &Model, grid: &ThetaGrid, settings: &EngineSettings) -> Result<Vec<Marginal>> {
    let n = model.latent.total_dim();
    guard(n, settings)?;
    let k = grid.points.len();
    let comps = par::map_range(settings.execution, n * k, |t| {
        tilted_component(t / k, model, &grid.points[t % k], settings)
    });
    let mut comps = comps.into_iter();
    (0..n)
        .map(|_| {
            let components = comps.by_ref().take(k).collect::<Result<Vec<_>>>()?;
            Ok(Mixture { components }.to_marginal(settings.support_points, settings.support_width))
        })
        .collect()
}

fn guard(n: usize, settings: &EngineSettings) -> Result<()> {
    if n > settings.laplace_n_max {
        return Err(Error::GuardExceeded {
            dim: n,
            max: settings.laplace_n_max,
        });
    }
    Ok(())
}

fn tilted_component(i: usize, model: &Model, point: &GridPoint, settings: &EngineSettings) -> Result<Component> {
    let ga = &point.approx;
    let (m, s) = (ga.mode[i], ga.marg_sd[i]);
    let cond = Conditional::new(i, model, point)?;
    let mut knots = Vec::new();
    let mut r = Vec::new();
    for v in linspace(m - settings.support_width * s, m + settings.support_width * s, settings.support_points) {
        if let Ok(l) = cond.log_ratio(v, &ga.mode, settings) {
            knots.push(v);
            r.push(l - norm_logpdf(v, m, s));
        }
    }
    Ok(Component::tilted(point.weight, m, s, knots, r))
}

/// The latent problem with coordinate `i` held fixed.
struct Conditional<'a> {
    i: usize,
    model: &'a Model,
    theta: &'a [f64],
    q_sub: SparsePrecision,
    /// `Q μ` without entry `i`.
    b_sub: Vec<f64>,
    /// Column `i` of `Q` without entry `i`.
    q_col: Vec<f64>,
    q_ii: f64,
    b_i: f64,
    a_sub: crate::sparse::SparseMatrix,
    a_col: Vec<f64>,
    /// Constraint rows restricted to the other coordinates, and the
    /// coefficients of `xᵢ` in them.
    rows: Option<(DMatrix<f64>, Vec<f64>)>,
}

impl<'a> Conditional<'a> {
    fn new(i: usize, model: &'a Model, point: &'a GridPoint) -> Result<Self> {
        let prior = assemble_prior(&model.latent, &point.theta_full)?;
        let n = prior.q.n();
        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let b = prior.q.matvec(&prior.mean)?;
        let mut q_col = vec![0.0; n];
        for (r, c, v) in prior.q.iter_full() {
            if c == i {
                q_col[r] = v;
            }
        }
        let (a_sub, a_col) = model.obs.a().split_column(i);
        let c = &prior.constraints;
        let active: Vec<usize> = (0..c.nrows())
            .filter(|&r| keep.iter().any(|&j| c[(r, j)] != 0.0))
            .collect();
        let rows = (!active.is_empty()).then(|| {
            let sub = DMatrix::from_fn(active.len(), keep.len(), |r, j| c[(active[r], keep[j])]);
            let coef = active.iter().map(|&r| c[(r, i)]).collect();
            (sub, coef)
        });
        Ok(Conditional {
            i,
            model,
            theta: &point.theta_full,
            q_sub: prior.q.principal_submatrix(&keep),
            b_sub: keep.iter().map(|&j| b[j]).collect(),
            q_col: keep.iter().map(|&j| q_col[j]).collect(),
            q_ii: prior.q.get(i, i),
            b_i: b[i],
            a_sub,
            a_col,
            rows,
        })
    }

    /// `log π(xᵢ = v, x₋ᵢ*, θ, y) − log π_G(x₋ᵢ* | xᵢ = v, θ, y)` up to terms
    /// constant in `v`.
    fn log_ratio(&self, v: f64, mode: &[f64], settings: &EngineSettings) -> Result<f64> {
        let own = -0.5 * self.q_ii * v * v + self.b_i * v;
        let mut offset = self.model.obs.offset().to_vec();
        offset.iter_mut().zip(&self.a_col).for_each(|(o, a)| *o += a * v);
        if self.q_sub.n() == 0 {
            let eta = offset;
            let lik = self.model.obs.eval_eta(&eta, self.theta)?.loglik;
            return Ok(own + lik);
        }
        let b: Vec<f64> = self.b_sub.iter().zip(&self.q_col).map(|(b, q)| b - q * v).collect();
        let problem = NewtonProblem {
            q: &self.q_sub,
            b,
            a: &self.a_sub,
            offset,
            obs: &self.model.obs,
            theta: self.theta,
            constraints: self
                .rows
                .as_ref()
                .map(|(sub, coef)| (sub, coef.iter().map(|c| -c * v).collect())),
        };
        let x0: Vec<f64> = mode
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.i)
            .map(|(_, &x)| x)
            .collect();
        let ga = problem.solve(&x0, &settings.newton)?;
        Ok(own + ga.objective - ga.log_density_at_mode())
    }
}
