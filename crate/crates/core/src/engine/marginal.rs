//! Posterior marginal densities and their summaries.
//!
//! Latent marginals are mixtures over the hyperparameter grid. Each mixture
//! component is a Gaussian `N(m, s²)` optionally multiplied by `exp(r(v))`
//! where the log tilt `r` is a cubic Hermite interpolant between knots and
//! constant outside them. An untilted component is handled in closed form; a tilted
//! one by Gauss–Legendre inside the knot range and closed-form Gaussian tails
//! outside it.

use serde::Serialize;
use statrs::function::erf::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean, standard deviation and the 2.5%, 50% and 97.5% quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

/// Density on a grid of support points plus its summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginal {
    pub support: Vec<f64>,
    pub density: Vec<f64>,
    pub summary: Summary,
}

impl Marginal {
    /// Trapezoid integral of the density over the support.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.support, &self.density)
    }

    /// Density at `v` by linear interpolation, zero outside the support.
    pub fn density_at(&self, v: f64) -> f64 {
        let s = &self.support;
        if s.is_empty() || v < s[0] || v > s[s.len() - 1] {
            return 0.0;
        }
        let k = s.partition_point(|&x| x <= v).clamp(1, s.len() - 1);
        let t = (v - s[k - 1]) / (s[k] - s[k - 1]);
        self.density[k - 1] * (1.0 - t) + self.density[k] * t
    }

    /// Normalise an unnormalised log-density given on `support` by the
    /// trapezoid rule; summaries come from the same rule with linear
    /// interpolation of the cumulative distribution for quantiles.
    pub fn from_log_density(support: Vec<f64>, log_density: &[f64]) -> Marginal {
        let top = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_density.iter().map(|l| (l - top).exp()).collect();
        Self::from_density(support, &raw)
    }

    pub fn from_density(support: Vec<f64>, raw: &[f64]) -> Marginal {
        let z = trapezoid(&support, raw);
        let density: Vec<f64> = raw.iter().map(|d| d / z).collect();
        let xd: Vec<f64> = support.iter().zip(&density).map(|(x, d)| x * d).collect();
        let mean = trapezoid(&support, &xd);
        let vd: Vec<f64> = support
            .iter()
            .zip(&density)
            .map(|(x, d)| (x - mean).powi(2) * d)
            .collect();
        let sd = trapezoid(&support, &vd).max(0.0).sqrt();
        let mut cdf = vec![0.0; support.len()];
        for k in 1..support.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (density[k] + density[k - 1]) * (support[k] - support[k - 1]);
        }
        let total = cdf.last().copied().unwrap_or(1.0);
        cdf.iter_mut().for_each(|c| *c /= total);
        let q = |p: f64| interpolate_quantile(&support, &cdf, p);
        let summary = Summary {
            mean,
            sd,
            q025: q(0.025),
            q500: q(0.5),
            q975: q(0.975),
        };
        Marginal {
            support,
            density,
            summary,
        }
    }

    /// Push the marginal through a monotone increasing transform `g` with
    /// derivative `dg`. Quantiles map exactly; the mean and sd are
    /// recomputed by the trapezoid rule on the transformed support.
    pub fn transformed(&self, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> Marginal {
        let support: Vec<f64> = self.support.iter().map(|&v| g(v)).collect();
        let density: Vec<f64> = self
            .support
            .iter()
            .zip(&self.density)
            .map(|(&v, &d)| d / dg(v))
            .collect();
        let mut m = Marginal::from_density(support, &density);
        m.summary.q025 = g(self.summary.q025);
        m.summary.q500 = g(self.summary.q500);
        m.summary.q975 = g(self.summary.q975);
        m
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0]))
        .sum()
}

fn interpolate_quantile(x: &[f64], cdf: &[f64], p: f64) -> f64 {
    let k = cdf.partition_point(|&c| c < p);
    if k == 0 {
        return x[0];
    }
    if k >= x.len() {
        return x[x.len() - 1];
    }
    let (c0, c1) = (cdf[k - 1], cdf[k]);
    if c1 <= c0 {
        return x[k];
    }
    x[k - 1] + (p - c0) / (c1 - c0) * (x[k] - x[k - 1])
}

/// `n` equally spaced points on `[lo, hi]`.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { hi } else { lo + h * k as f64 }).collect()
}

pub(crate) fn norm_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

/// Upper tail `1 − Φ(u)` without cancellation.
pub(crate) fn norm_sf(u: f64) -> f64 {
    0.5 * erfc(u / SQRT_2)
}

pub(crate) fn norm_pdf(u: f64) -> f64 {
    (-0.5 * u * u - LN_SQRT_2PI).exp()
}

pub(crate) fn norm_logpdf(v: f64, m: f64, s: f64) -> f64 {
    let u = (v - m) / s;
    -0.5 * u * u - LN_SQRT_2PI - s.ln()
}

// 8-point Gauss–Legendre on [-1, 1]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// One mixture component: `N(mean, sd²) · exp(r(v)) / Z`.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
    tilt: Option<Tilt>,
}

#[derive(Debug, Clone)]
struct Tilt {
    knots: Vec<f64>,
    /// log tilt at the knots, shifted so its maximum is zero
    r: Vec<f64>,
    /// slopes of the interpolant at the knots
    d: Vec<f64>,
    /// `Z` of the shifted tilt
    z: f64,
    /// unnormalised mass below each knot
    cum: Vec<f64>,
    /// unnormalised first and second moments
    m1: f64,
    m2: f64,
}

impl Component {
    pub fn gaussian(weight: f64, mean: f64, sd: f64) -> Self {
        Component {
            weight,
            mean,
            sd,
            tilt: None,
        }
    }

    /// Gaussian tilted by `exp(r)` with `r` given at increasing `knots`.
    /// Fewer than two knots leave the Gaussian untilted.
    pub fn tilted(weight: f64, mean: f64, sd: f64, knots: Vec<f64>, r: Vec<f64>) -> Self {
        if knots.len() < 2 {
            return Self::gaussian(weight, mean, sd);
        }
        let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r: Vec<f64> = r.iter().map(|v| v - top).collect();
        let d = parabolic_slopes(&knots, &r);
        let mut tilt = Tilt {
            knots,
            r,
            d,
            z: 0.0,
            cum: Vec::new(),
            m1: 0.0,
            m2: 0.0,
        };
        let (m, s) = (mean, sd);
        let nk = tilt.knots.len();
        // lower tail
        let a = tilt.knots[0];
        let ua = (a - m) / s;
        let ea = tilt.r[0].exp();
        let lo0 = ea * norm_cdf(ua);
        let lo1 = ea * (m * norm_cdf(ua) - s * norm_pdf(ua));
        let lo2 = ea * ((m * m + s * s) * norm_cdf(ua) - s * (a + m) * norm_pdf(ua));
        let mut cum = Vec::with_capacity(nk);
        cum.push(lo0);
        let (mut z, mut m1, mut m2) = (lo0, lo1, lo2);
        for k in 1..nk {
            let (i0, i1, i2) = tilt.segment(m, s, k, tilt.knots[k - 1], tilt.knots[k]);
            z += i0;
            m1 += i1;
            m2 += i2;
            cum.push(z);
        }
        let b = tilt.knots[nk - 1];
        let ub = (b - m) / s;
        let eb = tilt.r[nk - 1].exp();
        z += eb * norm_sf(ub);
        m1 += eb * (m * norm_sf(ub) + s * norm_pdf(ub));
        m2 += eb * ((m * m + s * s) * norm_sf(ub) + s * (b + m) * norm_pdf(ub));
        tilt.z = z;
        tilt.cum = cum;
        tilt.m1 = m1;
        tilt.m2 = m2;
        Component {
            weight,
            mean,
            sd,
            tilt: Some(tilt),
        }
    }

    pub fn first_moment(&self) -> f64 {
        match &self.tilt {
            None => self.mean,
            Some(t) => t.m1 / t.z,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match &self.tilt {
            None => self.mean * self.mean + self.sd * self.sd,
            Some(t) => t.m2 / t.z,
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        let g = norm_logpdf(v, self.mean, self.sd);
        match &self.tilt {
            None => g.exp(),
            Some(t) => (g + t.log_tilt(v)).exp() / t.z,
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let (m, s) = (self.mean, self.sd);
        match &self.tilt {
            None => norm_cdf((v - m) / s),
            Some(t) => {
                let nk = t.knots.len();
                let unnorm = if v <= t.knots[0] {
                    t.r[0].exp() * norm_cdf((v - m) / s)
                } else if v >= t.knots[nk - 1] {
                    let b = t.knots[nk - 1];
                    t.cum[nk - 1] + t.r[nk - 1].exp() * (norm_sf((b - m) / s) - norm_sf((v - m) / s))
                } else {
                    let k = t.knots.partition_point(|&x| x <= v);
                    t.cum[k - 1] + t.segment(m, s, k, t.knots[k - 1], v).0
                };
                (unnorm / t.z).clamp(0.0, 1.0)
            }
        }
    }
}

impl Tilt {
    fn log_tilt(&self, v: f64) -> f64 {
        let nk = self.knots.len();
        if v <= self.knots[0] {
            return self.r[0];
        }
        if v >= self.knots[nk - 1] {
            return self.r[nk - 1];
        }
        let k = self.knots.partition_point(|&x| x <= v);
        self.hermite(k, v)
    }

    /// Cubic on knot segment `k - 1 .. k`.
    fn hermite(&self, k: usize, v: f64) -> f64 {
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.r[k - 1]
            + (t3 - 2.0 * t2 + t) * h * self.d[k - 1]
            + (-2.0 * t3 + 3.0 * t2) * self.r[k]
            + (t3 - t2) * h * self.d[k]
    }

    /// Zeroth, first and second moments of the tilted Gaussian over `[a, b]`,
    /// a sub-interval of knot segment `k - 1 .. k`.
    fn segment(&self, m: f64, s: f64, k: usize, a: f64, b: f64) -> (f64, f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let v = mid + half * node;
            let f = (norm_logpdf(v, m, s) + self.hermite(k, v)).exp() * w * half;
            i0 += f;
            i1 += f * v;
            i2 += f * v * v;
        }
        (i0, i1, i2)
    }
}

/// Slopes of the parabola through each knot and its neighbours, so the
/// Hermite interpolant reproduces quadratics exactly.
fn parabolic_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        d[k] = (h[k] * delta[k - 1] + h[k - 1] * delta[k]) / (h[k - 1] + h[k]);
    }
    d[0] = ((2.0 * h[0] + h[1]) * delta[0] - h[0] * delta[1]) / (h[0] + h[1]);
    d[n - 1] = ((2.0 * h[n - 2] + h[n - 3]) * delta[n - 2] - h[n - 2] * delta[n - 3]) / (h[n - 2] + h[n - 3]);
    d
}

/// Finite mixture of (possibly tilted) Gaussians with weights summing to one.
#[derive(Debug, Clone)]
pub(crate) struct Mixture {
    pub components: Vec<Component>,
}

impl Mixture {
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.first_moment()).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let m2: f64 = self.components.iter().map(|c| c.weight * c.second_moment()).sum();
        (m2 - m * m).max(0.0).sqrt()
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(v)).sum()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.cdf(v)).sum()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - 12.0 * c.sd)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + 12.0 * c.sd)
            .fold(f64::NEG_INFINITY, f64::max);
        solve_increasing(|v| self.cdf(v) - p, lo, hi)
    }

    /// Marginal on `points` support points spanning mean ± `width` sd.
    pub fn to_marginal(&self, points: usize, width: f64) -> Marginal {
        let mean = self.mean();
        let sd = self.sd();
        let support = linspace(mean - width * sd, mean + width * sd, points);
        let density = support.iter().map(|&v| self.pdf(v)).collect();
        Marginal {
            support,
            density,
            summary: Summary {
                mean,
                sd,
                q025: self.quantile(0.025),
                q500: self.quantile(0.5),
                q975: self.quantile(0.975),
            },
        }
    }
}

/// Root of an increasing function on `[lo, hi]` by the Illinois variant of
/// regula falsi.
pub(crate) fn solve_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo >= 0.0 {
        return lo;
    }
    if fhi <= 0.0 {
        return hi;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (lo * fhi - hi * flo) / (fhi - flo);
        let x = if x.is_finite() && x > lo && x < hi { x } else { 0.5 * (lo + hi) };
        let fx = f(x);
        if fx == 0.0 || (hi - lo).abs() <= 1e-14 * (1.0 + x.abs()) {
            return x;
        }
        if fx < 0.0 {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

/// Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson).
#[derive(Debug, Clone)]
pub(crate) struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Pchip { x, y, d }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let n = self.x.len();
        let k = self.x.partition_point(|&x| x <= v).clamp(1, n - 1);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k - 1] + h10 * h * self.d[k - 1] + h01 * self.y[k] + h11 * h * self.d[k]
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
