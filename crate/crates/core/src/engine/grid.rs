use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{log_post_theta, EngineSettings, Model, ThetaMode};
use crate::error::{Error, Result};
use crate::gaussian::GaussianApprox;
use crate::par;

/// One retained hyperparameter value.
#[derive(Debug, Clone)]
pub struct GridPoint {
    /// Lattice coordinates.
    pub z: Vec<i64>,
    /// Integrated hyperparameters, internal scale.
    pub theta: Vec<f64>,
    /// All hyper slots, fixed ones included.
    pub theta_full: Vec<f64>,
    pub log_post: f64,
    pub weight: f64,
    pub approx: GaussianApprox,
}

/// Hyperparameter values used for numerical integration.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    pub mode_theta: Vec<f64>,
    pub log_post_mode: f64,
    /// Negative Hessian `H` at the mode.
    pub hessian: DMatrix<f64>,
    pub hessian_fallback: bool,
    /// Lower Cholesky factor `L` of `H`; `θ(z) = θ* + L⁻ᵀ (δz · z)`.
    pub scaling: DMatrix<f64>,
    pub step: f64,
    pub threshold: f64,
    /// Retained points in lexicographic order of `z`.
    pub points: Vec<GridPoint>,
    pub warnings: Vec<String>,
}

impl ThetaGrid {
    pub fn dim(&self) -> usize {
        self.mode_theta.len()
    }

    /// `θ(z)` for lattice coordinates `z`.
    pub fn theta_at(&self, z: &[i64]) -> Vec<f64> {
        let zs = DVector::from_iterator(z.len(), z.iter().map(|&k| k as f64 * self.step));
        let u = self
            .scaling
            .transpose()
            .solve_upper_triangular(&zs)
            .expect("Cholesky factor has a positive diagonal");
        self.mode_theta.iter().zip(u.iter()).map(|(m, d)| m + d).collect()
    }

    /// `(H⁻¹)_jj`, the Gaussian approximation of each marginal variance.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let d = self.dim();
        let inv = self
            .hessian
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| DMatrix::identity(d, d));
        (0..d).map(|j| inv[(j, j)]).collect()
    }
}

type Eval<T> = Option<(f64, T)>;

/// Walk the `z` lattice from the mode and keep every point whose
/// log-posterior lies less than `δπ` below the mode.
///
/// Each axis is walked outward in both directions until the drop reaches
/// `δπ`; the box spanned by the axis extents is then filled. Every point is
/// warm-started from the mode's latent field, so the values do not depend on
/// evaluation order.
pub fn explore_grid(model: &Model, mode: &ThetaMode, settings: &EngineSettings) -> Result<ThetaGrid> {
    let mut grid = ThetaGrid::centred(mode.theta.clone(), mode.log_post, mode.hessian.clone(), settings)?;
    grid.hessian_fallback = mode.hessian_fallback;
    let x0 = mode.approx.mode.clone();
    let (kept, warnings) = walk_lattice(&grid, mode.approx.clone(), settings, |theta| {
        log_post_theta(model, theta, Some(&x0), settings)
    })?;
    let mut points = Vec::with_capacity(kept.len());
    for (z, log_post, approx) in kept {
        let theta = grid.theta_at(&z);
        let theta_full = model.latent.expand_theta(&theta)?;
        points.push(GridPoint {
            z,
            theta,
            theta_full,
            log_post,
            weight: 0.0,
            approx,
        });
    }
    let weights = normalised_weights(&points.iter().map(|p| p.log_post).collect::<Vec<_>>());
    points.iter_mut().zip(weights).for_each(|(p, w)| p.weight = w);
    grid.points = points;
    grid.warnings = warnings;
    Ok(grid)
}

impl ThetaGrid {
    /// Empty grid around `mode_theta` with scaling from `hessian`.
    pub(crate) fn centred(
        mode_theta: Vec<f64>,
        log_post_mode: f64,
        hessian: DMatrix<f64>,
        settings: &EngineSettings,
    ) -> Result<ThetaGrid> {
        if !(settings.grid_step > 0.0 && settings.grid_threshold > 0.0) {
            return Err(Error::DomainError(format!(
                "grid step and threshold must be positive, got {} and {}",
                settings.grid_step, settings.grid_threshold
            )));
        }
        let scaling = if mode_theta.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            hessian
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { column: 0, pivot: 0.0 })?
                .l()
        };
        Ok(ThetaGrid {
            mode_theta,
            log_post_mode,
            hessian,
            hessian_fallback: false,
            scaling,
            step: settings.grid_step,
            threshold: settings.grid_threshold,
            points: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

/// `exp(lp − max)` normalised to sum to one, summed in the given order.
pub(crate) fn normalised_weights(log_post: &[f64]) -> Vec<f64> {
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_post.iter().map(|lp| (lp - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Lattice walk behind [`explore_grid`] for an arbitrary evaluator. Returns
/// the kept `(z, log_post, payload)` in lexicographic order of `z` plus
/// warnings for skipped points.
#[allow(clippy::type_complexity)]
pub(crate) fn walk_lattice<T, F>(
    grid: &ThetaGrid,
    at_mode: T,
    settings: &EngineSettings,
    f: F,
) -> Result<(Vec<(Vec<i64>, f64, T)>, Vec<String>)>
where
    T: Send,
    F: Fn(&[f64]) -> Result<(f64, T)> + Sync + Send,
{
    let d = grid.dim();
    let lp_star = grid.log_post_mode;
    let eval = |z: &[i64]| -> (Eval<T>, Option<String>) {
        match f(&grid.theta_at(z)) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(format!("grid point z = {z:?} skipped: {e}"))),
        }
    };
    let keep = |lp: f64| lp_star - lp < settings.grid_threshold;

    let mut cache: BTreeMap<Vec<i64>, Eval<T>> = BTreeMap::new();
    cache.insert(vec![0; d], Some((lp_star, at_mode)));
    let mut warnings = Vec::new();

    // axis walks: one task per direction
    let directions: Vec<(usize, i64)> = (0..d).flat_map(|j| [(j, -1), (j, 1)]).collect();
    let walks = par::map(settings.execution, &directions, |&(j, sign)| {
        let mut found = Vec::new();
        let mut notes = Vec::new();
        let mut k = 1i64;
        loop {
            if k as usize > settings.max_grid_points {
                return Err(Error::GridExplosion {
                    max: settings.max_grid_points,
                });
            }
            let mut z = vec![0i64; d];
            z[j] = sign * k;
            let (v, note) = eval(&z);
            notes.extend(note);
            let cont = v.as_ref().is_some_and(|(lp, _)| keep(*lp));
            found.push((z, v));
            if !cont {
                break;
            }
            k += 1;
        }
        Ok((found, notes))
    });
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for (&(j, sign), walk) in directions.iter().zip(walks) {
        let (found, notes) = walk?;
        warnings.extend(notes);
        // the last point walked is outside the threshold or failed
        let extent = found.len() as i64 - 1;
        if sign < 0 {
            lo[j] = -extent;
        } else {
            hi[j] = extent;
        }
        cache.extend(found);
    }

    let box_size = lo
        .iter()
        .zip(&hi)
        .try_fold(1usize, |acc, (l, h)| acc.checked_mul((h - l + 1) as usize));
    if !matches!(box_size, Some(n) if n <= settings.max_grid_points) {
        return Err(Error::GridExplosion {
            max: settings.max_grid_points,
        });
    }

    let mut todo = Vec::new();
    let mut z = lo.clone();
    if d > 0 {
        'fill: loop {
            if !cache.contains_key(&z) {
                todo.push(z.clone());
            }
            for j in (0..d).rev() {
                if z[j] < hi[j] {
                    z[j] += 1;
                    continue 'fill;
                }
                z[j] = lo[j];
            }
            break;
        }
    }
    let filled = par::map(settings.execution, &todo, |z| eval(z));
    for (z, (v, note)) in todo.into_iter().zip(filled) {
        warnings.extend(note);
        cache.insert(z, v);
    }

    let kept: Vec<(Vec<i64>, f64, T)> = cache
        .into_iter()
        .filter_map(|(z, v)| v.filter(|(lp, _)| keep(*lp)).map(|(lp, t)| (z, lp, t)))
        .collect();
    if let Some(best) = kept.iter().map(|k| k.1).reduce(f64::max) {
        if best > lp_star + 1e-6 * (1.0 + lp_star.abs()) {
            warnings.push(format!("a grid point exceeds the optimiser's mode by {:e}", best - lp_star));
        }
    }
    Ok((kept, warnings))
}
