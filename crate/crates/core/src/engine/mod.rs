//! Laplace approximation of the hyperparameter posterior and the integrated
//! posterior marginals.
//!
//! For hyperparameters `θ` the unnormalised log-posterior is
//!
//! ```text
//! log π(θ | y) ≈ log π(θ) + log π(x* | θ) + log π(y | x*, θ) − log π_G(x* | θ, y)
//! ```
//!
//! evaluated at the mode `x*` of the Gaussian approximation. All normalising
//! constants are kept, so for a fully Gaussian model the value is exactly the
//! log marginal likelihood plus `log π(θ)`.
//!
//! The pipeline is [`optimize_theta`] → [`explore_grid`] → marginals, bundled
//! by [`run_inla`].

mod grid;
mod hyper;
mod laplace;
mod marginal;
mod optimize;

use serde::Serialize;

pub use grid::{explore_grid, GridPoint, ThetaGrid};
pub use hyper::{hyper_marginals, HyperMarginal};
pub use laplace::{latent_marginal_laplace, latent_marginals_laplace};
pub use marginal::{Marginal, Summary};
pub use optimize::{optimize_theta, ThetaMode};

use crate::error::{Error, Result};
use crate::gaussian::{fit_with, GaussianApprox, NewtonSettings};
use crate::latent::{assemble_prior, LatentModelSpec};
use crate::likelihood::{Family, ObservationModel};
use crate::par::{self, Execution};
use crate::sparse::{constrain, factorize};
use marginal::{Component, Mixture};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Statement of the additive-constant convention, reported with every run.
pub const CONSTANT_CONVENTION: &str =
    "log posterior of theta keeps all normalising constants: for Gaussian models it equals log marginal likelihood + log prior";

/// A latent model together with its data.
#[derive(Debug, Clone)]
pub struct Model {
    pub latent: LatentModelSpec,
    pub obs: ObservationModel,
}

impl Model {
    pub fn new(latent: LatentModelSpec, obs: ObservationModel) -> Result<Self> {
        if obs.latent_dim() != latent.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: latent.total_dim(),
                found: obs.latent_dim(),
            });
        }
        for f in obs.families() {
            if let Family::Gaussian { precision } = *f {
                if precision >= latent.hypers().len() {
                    return Err(Error::UnknownHyperSlot {
                        slot: precision,
                        len: latent.hypers().len(),
                    });
                }
            }
        }
        Ok(Model { latent, obs })
    }

    /// Number of integrated hyperparameters.
    pub fn n_theta(&self) -> usize {
        self.latent.free_slots().len()
    }

    /// Initial values of the integrated hyperparameters.
    pub fn theta_initial(&self) -> Vec<f64> {
        self.latent
            .free_slots()
            .iter()
            .map(|&s| self.latent.hypers()[s].initial)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSettings {
    /// Lattice step `δz` in standardised coordinates.
    pub grid_step: f64,
    /// Log-density drop `δπ` below the mode at which grid points are dropped.
    pub grid_threshold: f64,
    pub max_grid_points: usize,
    /// Central finite-difference step on the internal scale.
    pub fd_step: f64,
    pub newton: NewtonSettings,
    pub strategy: Strategy,
    /// Largest latent dimension the Laplace strategy accepts.
    pub laplace_n_max: usize,
    pub support_points: usize,
    /// Half-width of the marginal support in standard deviations.
    pub support_width: f64,
    pub execution: Execution,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            grid_step: 1.0,
            grid_threshold: 2.5,
            max_grid_points: 10_000,
            fd_step: 1e-4,
            newton: NewtonSettings::default(),
            strategy: Strategy::Gaussian,
            laplace_n_max: 50,
            support_points: 75,
            support_width: 5.0,
            execution: Execution::Parallel,
        }
    }
}

/// Laplace approximation of `log π(θ | y)` up to `log π(y)`, together with
/// the Gaussian approximation it was built from. `theta` holds the
/// integrated hyperparameters on the internal scale; `x0` is the Newton
/// starting point (the prior mean when `None`).
pub fn log_post_theta(
    model: &Model,
    theta: &[f64],
    x0: Option<&[f64]>,
    settings: &EngineSettings,
) -> Result<(f64, GaussianApprox)> {
    let full = model.latent.expand_theta(theta)?;
    let prior = assemble_prior(&model.latent, &full)?;
    let constraints = (prior.constraints.nrows() > 0).then_some(&prior.constraints);
    let start = x0.unwrap_or(&prior.mean);
    let ga = fit_with(&prior.q, &prior.mean, &model.obs, &full, start, constraints, &settings.newton)?;

    let hypers = model.latent.hypers();
    let log_hyper: f64 = model
        .latent
        .free_slots()
        .iter()
        .zip(theta)
        .map(|(&s, &t)| hypers[s].prior.log_density(t))
        .sum();

    let n = prior.q.n();
    let prior_factor = factorize(&prior.q)?;
    let d: Vec<f64> = ga.mode.iter().zip(&prior.mean).map(|(x, m)| x - m).collect();
    let mut log_prior_x = 0.5 * (prior_factor.logdet() + prior.logdet_correction)
        - 0.5 * n as f64 * LN_2PI
        - 0.5 * prior.q.quad_form(&d)?;
    if let Some(c) = constraints {
        let (_, info) = constrain(&prior.mean, &prior_factor, c, &vec![0.0; c.nrows()])?;
        log_prior_x -= info.log_density_at_rhs;
    }
    let value = log_hyper + log_prior_x + ga.loglik - ga.log_density_at_mode();
    if !value.is_finite() {
        return Err(Error::NewtonDiverged(format!("non-finite log posterior at theta = {theta:?}")));
    }
    Ok((value, ga))
}

/// Gaussian-strategy latent marginals: for each index a mixture over grid
/// points of `N(mode_i(θ_k), sd_i(θ_k)²)` with the grid weights.
pub fn latent_marginals_gaussian(grid: &ThetaGrid, settings: &EngineSettings) -> Vec<Marginal> {
    let n = grid.points.first().map_or(0, |p| p.approx.dim());
    par::map_range(settings.execution, n, |i| {
        let mix = Mixture {
            components: grid
                .points
                .iter()
                .map(|p| Component::gaussian(p.weight, p.approx.mode[i], p.approx.marg_sd[i]))
                .collect(),
        };
        mix.to_marginal(settings.support_points, settings.support_width)
    })
}

/// Run diagnostics written next to the results.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub theta_star: Vec<f64>,
    pub theta_names: Vec<String>,
    pub log_post_at_mode: f64,
    pub hessian: Vec<Vec<f64>>,
    pub hessian_fallback: bool,
    pub optimizer_iterations: usize,
    pub grid_size: usize,
    pub grid_step: f64,
    pub grid_threshold: f64,
    pub newton_iterations: Vec<usize>,
    pub non_monotone_points: usize,
    pub strategy: Strategy,
    pub constant_convention: &'static str,
    pub warnings: Vec<String>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct InlaResult {
    pub mode: ThetaMode,
    pub grid: ThetaGrid,
    pub latent: Vec<Marginal>,
    pub hyper: Vec<HyperMarginal>,
    pub diagnostics: Diagnostics,
}

/// Optimise, explore the grid and compute all marginals.
pub fn run_inla(model: &Model, settings: &EngineSettings) -> Result<InlaResult> {
    let mode = optimize_theta(model, &model.theta_initial(), settings)?;
    let grid = explore_grid(model, &mode, settings)?;
    let latent = match settings.strategy {
        Strategy::Gaussian => latent_marginals_gaussian(&grid, settings),
        Strategy::Laplace => latent_marginals_laplace(model, &grid, settings)?,
    };
    let hyper = hyper_marginals(model, &grid, settings);

    let mut warnings = mode.warnings.clone();
    warnings.extend(grid.warnings.iter().cloned());
    let hypers = model.latent.hypers();
    let diagnostics = Diagnostics {
        theta_star: mode.theta.clone(),
        theta_names: model
            .latent
            .free_slots()
            .iter()
            .map(|&s| hypers[s].name.clone())
            .collect(),
        log_post_at_mode: mode.log_post,
        hessian: grid.hessian.row_iter().map(|r| r.iter().copied().collect()).collect(),
        hessian_fallback: grid.hessian_fallback,
        optimizer_iterations: mode.iterations,
        grid_size: grid.points.len(),
        grid_step: grid.step,
        grid_threshold: grid.threshold,
        newton_iterations: grid.points.iter().map(|p| p.approx.iterations).collect(),
        non_monotone_points: grid.points.iter().filter(|p| !p.approx.monotone).count(),
        strategy: settings.strategy,
        constant_convention: CONSTANT_CONVENTION,
        warnings,
    };
    Ok(InlaResult {
        mode,
        grid,
        latent,
        hyper,
        diagnostics,
    })
}
