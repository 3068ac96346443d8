//! Independent reference computations for checking the engine.
//!
//! Everything here is brute force: dense linear algebra through `nalgebra`
//! and tensor-product trapezoid quadrature of the joint density
//! `π(θ) π(x | θ) π(y | x, θ)`. Nothing in this module calls the engine.

mod dense;
mod frailty;

pub use dense::{dense_reference, DenseOp, DenseOutput, DENSE_MAX};
pub use frailty::{frailty_correction_weight, lognormal_match, trigamma};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::latent::{assemble_prior, LatentModelSpec};
use crate::likelihood::{total_loglik, ObservationModel};
use crate::par::{self, Execution};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const MIN_POINTS: usize = 41;
pub const MAX_NODES: usize = 10_000_000;
pub const MAX_DIMS: usize = 3;
/// Largest share of the mass allowed in the outermost cell of any axis.
pub const EDGE_MASS_LIMIT: f64 = 1e-3;

/// One quadrature axis: `points` equally spaced nodes on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        AxisRange { lo, hi, points }
    }

    /// `centre ± half_width` with `points` nodes.
    pub fn around(centre: f64, half_width: f64, points: usize) -> Self {
        AxisRange::new(centre - half_width, centre + half_width, points)
    }

    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    fn node(&self, k: usize) -> f64 {
        if k == self.points - 1 {
            self.hi
        } else {
            self.lo + self.step() * k as f64
        }
    }

    fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.points - 1 {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

/// Box for [`brute_posterior`]: one range per latent variable, then one per
/// integrated hyperparameter (internal scale).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub latent_ranges: Vec<AxisRange>,
    pub theta_ranges: Vec<AxisRange>,
}

impl QuadratureSpec {
    fn axes(&self) -> Vec<AxisRange> {
        self.latent_ranges.iter().chain(&self.theta_ranges).copied().collect()
    }

    pub fn nodes(&self) -> Option<usize> {
        self.axes().iter().try_fold(1usize, |acc, a| acc.checked_mul(a.points))
    }
}

/// Marginal density on the quadrature nodes of one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisMarginal {
    pub support: Vec<f64>,
    pub density: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePosterior {
    pub latent: Vec<AxisMarginal>,
    /// Integrated hyperparameters on the internal scale.
    pub hyper: Vec<AxisMarginal>,
    /// `log π(y)`.
    pub log_evidence: f64,
}

/// Dense joint prior of the latent field at one hyperparameter value.
struct DensePrior {
    q: nalgebra::DMatrix<f64>,
    log_norm: f64,
}

/// Posterior by tensor-product trapezoid quadrature over `spec`.
///
/// The latent prior is taken from the same assembly as the engine but its
/// log-determinant and quadratic form are computed densely. Models with
/// linear constraints are rejected since the constrained density lives on a
/// subspace the box cannot represent.
pub fn brute_posterior(
    latent: &LatentModelSpec,
    obs: &ObservationModel,
    spec: &QuadratureSpec,
    exec: Execution,
) -> Result<OraclePosterior> {
    let n = latent.total_dim();
    let slots = latent.free_slots();
    let d = slots.len();
    if n + d > MAX_DIMS {
        return Err(Error::GuardExceeded {
            dim: n + d,
            max: MAX_DIMS,
        });
    }
    if spec.latent_ranges.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: spec.latent_ranges.len(),
        });
    }
    if spec.theta_ranges.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: spec.theta_ranges.len(),
        });
    }
    if obs.latent_dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: obs.latent_dim(),
        });
    }
    let axes = spec.axes();
    for a in &axes {
        if a.points < MIN_POINTS || !(a.hi > a.lo) {
            return Err(Error::DomainError(format!(
                "quadrature axis [{}, {}] with {} points: need hi > lo and at least {MIN_POINTS} points",
                a.lo, a.hi, a.points
            )));
        }
    }
    let total = match spec.nodes() {
        Some(t) if t <= MAX_NODES => t,
        t => {
            return Err(Error::GridTooLarge {
                nodes: t.unwrap_or(usize::MAX),
                max: MAX_NODES,
            })
        }
    };

    // one dense prior per hyperparameter node
    let theta_nodes: usize = spec.theta_ranges.iter().map(|a| a.points).product();
    let thetas: Vec<Vec<f64>> = (0..theta_nodes)
        .map(|t| {
            let idx = unravel(t, &spec.theta_ranges);
            idx.iter().zip(&spec.theta_ranges).map(|(&k, a)| a.node(k)).collect()
        })
        .collect();
    let priors = par::map(exec, &thetas, |theta| -> Result<(Vec<f64>, f64, DensePrior)> {
        let full = latent.expand_theta(theta)?;
        let assembly = assemble_prior(latent, &full)?;
        if assembly.constraints.nrows() > 0 {
            return Err(Error::Unsupported("the quadrature oracle does not handle linear constraints".into()));
        }
        let q = assembly.q.to_dense();
        let chol = q.clone().cholesky().ok_or(Error::NotPositiveDefinite { column: 0, pivot: 0.0 })?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_hyper: f64 = slots
            .iter()
            .zip(theta)
            .map(|(&s, &t)| latent.hypers()[s].prior.log_density(t))
            .sum();
        let log_norm = 0.5 * (logdet + assembly.logdet_correction) - 0.5 * n as f64 * LN_2PI;
        Ok((full, log_hyper, DensePrior { q, log_norm }))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let latent_nodes = total / theta_nodes;
    let log_joint = par::map_range(exec, total, |flat| -> Result<f64> {
        let (xi, ti) = (flat / theta_nodes, flat % theta_nodes);
        let idx = unravel(xi, &spec.latent_ranges);
        let x: Vec<f64> = idx.iter().zip(&spec.latent_ranges).map(|(&k, a)| a.node(k)).collect();
        let (full, log_hyper, prior) = &priors[ti];
        let xv = nalgebra::DVector::from_column_slice(&x);
        let quad = xv.dot(&(&prior.q * &xv));
        let lik = total_loglik(obs, &x, full)?.loglik;
        Ok(log_hyper + prior.log_norm - 0.5 * quad + lik)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(log_joint.len(), latent_nodes * theta_nodes);

    let top = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DomainError("joint density is not finite anywhere in the box".into()));
    }
    let mut sums: Vec<Vec<f64>> = axes.iter().map(|a| vec![0.0; a.points]).collect();
    let mut z = 0.0;
    for (flat, l) in log_joint.iter().enumerate() {
        let idx = unravel(flat, &axes);
        let w: f64 = idx.iter().zip(&axes).map(|(&k, a)| a.weight(k)).product();
        let m = w * (l - top).exp();
        z += m;
        for (axis, &k) in idx.iter().enumerate() {
            // mass per node divided by the node's own weight gives density
            sums[axis][k] += m / axes[axis].weight(k);
        }
    }

    let mut marginals = Vec::with_capacity(axes.len());
    for (axis, a) in axes.iter().enumerate() {
        let support: Vec<f64> = (0..a.points).map(|k| a.node(k)).collect();
        let density: Vec<f64> = sums[axis].iter().map(|s| s / z).collect();
        for end in [0, a.points - 1] {
            let mass = density[end] * a.weight(end);
            if mass >= EDGE_MASS_LIMIT {
                return Err(Error::BoxTooNarrow { axis, mass });
            }
        }
        let mean: f64 = (0..a.points).map(|k| a.weight(k) * density[k] * support[k]).sum();
        let var: f64 = (0..a.points)
            .map(|k| a.weight(k) * density[k] * (support[k] - mean).powi(2))
            .sum();
        marginals.push(AxisMarginal {
            support,
            density,
            mean,
            sd: var.max(0.0).sqrt(),
        });
    }
    let hyper = marginals.split_off(n);
    Ok(OraclePosterior {
        latent: marginals,
        hyper,
        log_evidence: top + z.ln(),
    })
}

/// Row-major multi-index of `flat`, last axis fastest.
fn unravel(mut flat: usize, axes: &[AxisRange]) -> Vec<usize> {
    let mut idx = vec![0; axes.len()];
    for (j, a) in axes.iter().enumerate().rev() {
        idx[j] = flat % a.points;
        flat /= a.points;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{ComponentSpec, HyperParam, HyperPrior};
    use crate::likelihood::Family;
    use crate::sparse::SparseMatrix;

    fn conjugate() -> (LatentModelSpec, ObservationModel) {
        let latent = LatentModelSpec::new(
            vec![ComponentSpec::iid("x", 1, 0)],
            vec![HyperParam::log_precision("p").fixed_at(0.0), HyperParam::log_precision("o").fixed_at(0.0)],
            0.001,
        )
        .unwrap();
        let obs = ObservationModel::single(Family::Gaussian { precision: 1 }, &[2.0], SparseMatrix::identity(1)).unwrap();
        (latent, obs)
    }

    fn poisson(fixed: bool) -> (LatentModelSpec, ObservationModel) {
        let h = HyperParam::log_precision("p").with_prior(HyperPrior::LogGamma { shape: 2.0, rate: 1.0 });
        let h = if fixed { h.fixed_at(0.5) } else { h };
        let latent = LatentModelSpec::new(vec![ComponentSpec::iid("x", 1, 0)], vec![h], 0.001).unwrap();
        let obs = ObservationModel::single(Family::Poisson, &[4.0], SparseMatrix::identity(1)).unwrap();
        (latent, obs)
    }

    #[test]
    fn conjugate_scalar_posterior_and_evidence() {
        let (l, o) = conjugate();
        let spec = QuadratureSpec {
            latent_ranges: vec![AxisRange::new(-6.0, 8.0, 2001)],
            theta_ranges: vec![],
        };
        let post = brute_posterior(&l, &o, &spec, Execution::Parallel).unwrap();
        assert!((post.latent[0].mean - 1.0).abs() < 1e-3);
        assert!((post.latent[0].sd - 0.5f64.sqrt()).abs() < 1e-3);
        let evidence = -0.5 * (4.0 * std::f64::consts::PI).ln() - 1.0;
        assert!((post.log_evidence - evidence).abs() < 1e-3);
    }

    #[test]
    fn refinement_is_self_consistent() {
        let (l, o) = poisson(true);
        let run = |points| {
            let spec = QuadratureSpec {
                latent_ranges: vec![AxisRange::new(-3.0, 4.0, points)],
                theta_ranges: vec![],
            };
            brute_posterior(&l, &o, &spec, Execution::Parallel).unwrap().latent[0].mean
        };
        assert!((run(1001) - run(1_000_001)).abs() < 1e-4);
    }

    #[test]
    fn doubling_resolution_with_a_hyperparameter() {
        let (l, o) = poisson(false);
        let run = |points| {
            let spec = QuadratureSpec {
                latent_ranges: vec![AxisRange::new(-3.0, 4.0, points)],
                theta_ranges: vec![AxisRange::new(-6.0, 6.0, points)],
            };
            let p = brute_posterior(&l, &o, &spec, Execution::Parallel).unwrap();
            (p.latent[0].mean, p.hyper[0].mean)
        };
        let (a, b) = (run(201), run(401));
        assert!((a.0 - b.0).abs() < 1e-4 && (a.1 - b.1).abs() < 1e-4, "{a:?} {b:?}");
    }

    #[test]
    fn guards() {
        let (l, o) = conjugate();
        let narrow = QuadratureSpec {
            latent_ranges: vec![AxisRange::new(0.0, 1.0, 101)],
            theta_ranges: vec![],
        };
        assert!(matches!(
            brute_posterior(&l, &o, &narrow, Execution::Serial),
            Err(Error::BoxTooNarrow { axis: 0, .. })
        ));
        let sparse = QuadratureSpec {
            latent_ranges: vec![AxisRange::new(-5.0, 5.0, 11)],
            theta_ranges: vec![],
        };
        assert!(matches!(brute_posterior(&l, &o, &sparse, Execution::Serial), Err(Error::DomainError(_))));
        let huge = QuadratureSpec {
            latent_ranges: vec![AxisRange::new(-5.0, 5.0, 20_000_000)],
            theta_ranges: vec![],
        };
        assert!(matches!(brute_posterior(&l, &o, &huge, Execution::Serial), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let (l, o) = poisson(false);
        let spec = QuadratureSpec {
            latent_ranges: vec![AxisRange::new(-3.0, 4.0, 101)],
            theta_ranges: vec![AxisRange::new(-6.0, 6.0, 101)],
        };
        let a = brute_posterior(&l, &o, &spec, Execution::Serial).unwrap();
        let b = brute_posterior(&l, &o, &spec, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
