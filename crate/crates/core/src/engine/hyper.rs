use std::collections::BTreeMap;

use serde::Serialize;

use super::marginal::{linspace, Pchip};
use super::{EngineSettings, Marginal, Model, ThetaGrid};

/// Posterior marginal of one hyperparameter on both scales.
#[derive(Debug, Clone, Serialize)]
pub struct HyperMarginal {
    pub name: String,
    pub internal: Marginal,
    pub natural: Marginal,
}

/// Lattice steps added beyond the outermost grid value on each side.
const EXTEND_STEPS: f64 = 2.0;

/// Marginal of each integrated hyperparameter.
///
/// Grid weights are summed over points sharing the same lattice coordinate
/// `z_j`. Lattice value `z_j` is placed at `θ*_j + σ_j δz z_j` with
/// `σ_j² = (H⁻¹)_jj`, which is exact for a one-dimensional grid and for a
/// Gaussian posterior. The log of the collapsed weights is interpolated by a
/// monotone cubic, extended into the tails, and normalised on the support.
pub fn hyper_marginals(model: &Model, grid: &ThetaGrid, settings: &EngineSettings) -> Vec<HyperMarginal> {
    let hypers = model.latent.hypers();
    let slots = model.latent.free_slots();
    let var = grid.marginal_variances();
    (0..grid.dim())
        .map(|j| {
            let sigma = var[j].sqrt();
            let internal = axis_marginal(grid, j, sigma, settings.support_points);
            let tr = hypers[slots[j]].transform;
            let natural = internal.transformed(|v| tr.to_natural(v), |v| tr.jacobian(v));
            HyperMarginal {
                name: hypers[slots[j]].name.clone(),
                internal,
                natural,
            }
        })
        .collect()
}

fn axis_marginal(grid: &ThetaGrid, j: usize, sigma: f64, points: usize) -> Marginal {
    let centre = grid.mode_theta[j];
    let h = sigma * grid.step;
    let mut mass: BTreeMap<i64, f64> = BTreeMap::new();
    for p in &grid.points {
        *mass.entry(p.z[j]).or_insert(0.0) += p.weight;
    }
    let xs: Vec<f64> = mass.keys().map(|&k| centre + h * k as f64).collect();
    let ls: Vec<f64> = mass.values().map(|w| w.ln()).collect();

    if xs.len() < 2 {
        let support = linspace(centre - 5.0 * sigma, centre + 5.0 * sigma, points);
        let ld: Vec<f64> = support.iter().map(|v| -0.5 * ((v - centre) / sigma).powi(2)).collect();
        return Marginal::from_log_density(support, &ld);
    }

    let n = xs.len();
    let lower = tail(&xs[..3.min(n)], &ls[..3.min(n)], true);
    let upper = tail(&xs[n - 3.min(n)..], &ls[n - 3.min(n)..], false);
    let lo = lower.as_ref().map_or(xs[0], |_| xs[0] - EXTEND_STEPS * h);
    let hi = upper.as_ref().map_or(xs[n - 1], |_| xs[n - 1] + EXTEND_STEPS * h);
    let pchip = Pchip::new(xs.clone(), ls);
    let support = linspace(lo, hi, points);
    let ld: Vec<f64> = support
        .iter()
        .map(|&v| {
            if v < xs[0] {
                lower.as_ref().expect("extended below").eval(v)
            } else if v > xs[n - 1] {
                upper.as_ref().expect("extended above").eval(v)
            } else {
                pchip.eval(v)
            }
        })
        .collect();
    Marginal::from_log_density(support, &ld)
}

/// Extrapolation of the log-density beyond the outermost lattice values.
enum Tail {
    Quadratic { x0: f64, a: f64, b: f64, c: f64 },
    Linear { x0: f64, y0: f64, slope: f64 },
}

impl Tail {
    fn eval(&self, v: f64) -> f64 {
        match *self {
            Tail::Quadratic { x0, a, b, c } => {
                let t = v - x0;
                a + b * t + c * t * t
            }
            Tail::Linear { x0, y0, slope } => y0 + slope * (v - x0),
        }
    }
}

/// Quadratic through the three outermost points when concave, otherwise a
/// line through the two outermost when it decreases outward; `None` leaves
/// the support at the last lattice value.
fn tail(x: &[f64], y: &[f64], lower: bool) -> Option<Tail> {
    let n = x.len();
    let (xe, ye, xn, yn) = if lower {
        (x[0], y[0], x[1], y[1])
    } else {
        (x[n - 1], y[n - 1], x[n - 2], y[n - 2])
    };
    if n == 3 {
        // Newton form through the three points, re-expanded around the end
        let d1 = (y[1] - y[0]) / (x[1] - x[0]);
        let d2 = (y[2] - y[1]) / (x[2] - x[1]);
        let c = (d2 - d1) / (x[2] - x[0]);
        if c < 0.0 {
            let b = d1 + c * (2.0 * xe - x[0] - x[1]);
            let outward = if lower { -b } else { b };
            // vertex must not lie beyond the end, or the tail would rise
            if outward <= 0.0 {
                return Some(Tail::Quadratic {
                    x0: xe,
                    a: ye,
                    b,
                    c,
                });
            }
        }
    }
    let slope = (ye - yn) / (xe - xn);
    let outward = if lower { -slope } else { slope };
    (outward < 0.0).then_some(Tail::Linear { x0: xe, y0: ye, slope })
}
