use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Map between the unconstrained internal scale and the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperTransform {
    /// `θ = log τ`.
    LogPrecision,
    /// `θ = logit((φ + 1) / 2)`.
    LogitCorrelation,
}

impl HyperTransform {
    pub fn to_natural(self, theta: f64) -> f64 {
        match self {
            HyperTransform::LogPrecision => theta.exp(),
            HyperTransform::LogitCorrelation => 2.0 / (1.0 + (-theta).exp()) - 1.0,
        }
    }

    pub fn to_internal(self, value: f64) -> f64 {
        match self {
            HyperTransform::LogPrecision => value.ln(),
            HyperTransform::LogitCorrelation => ((1.0 + value) / (1.0 - value)).ln(),
        }
    }

    /// `d natural / d θ`, used to move densities between scales.
    pub fn jacobian(self, theta: f64) -> f64 {
        match self {
            HyperTransform::LogPrecision => theta.exp(),
            HyperTransform::LogitCorrelation => {
                let s = 1.0 / (1.0 + (-theta).exp());
                2.0 * s * (1.0 - s)
            }
        }
    }
}

/// Prior density on the internal scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum HyperPrior {
    /// `τ ~ Gamma(shape, rate)` expressed on `θ = log τ`.
    LogGamma { shape: f64, rate: f64 },
    Normal { mean: f64, precision: f64 },
}

impl HyperPrior {
    pub fn log_density(&self, theta: f64) -> f64 {
        match *self {
            HyperPrior::LogGamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + shape * theta - rate * theta.exp()
            }
            HyperPrior::Normal { mean, precision } => {
                0.5 * (precision.ln() - LN_2PI) - 0.5 * precision * (theta - mean).powi(2)
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            HyperPrior::LogGamma { shape, rate } => shape > 0.0 && rate > 0.0,
            HyperPrior::Normal { mean, precision } => mean.is_finite() && precision > 0.0,
        }
    }
}

/// One hyperparameter slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParam {
    pub name: String,
    pub transform: HyperTransform,
    pub prior: HyperPrior,
    /// Starting value on the internal scale; the value itself when `fixed`.
    pub initial: f64,
    /// Fixed slots are not integrated over.
    pub fixed: bool,
}

impl HyperParam {
    /// Log-precision with the vague log-gamma(1, 5e-5) default.
    pub fn log_precision(name: impl Into<String>) -> Self {
        HyperParam {
            name: name.into(),
            transform: HyperTransform::LogPrecision,
            prior: HyperPrior::LogGamma {
                shape: 1.0,
                rate: 5e-5,
            },
            initial: 4.0,
            fixed: false,
        }
    }

    /// Correlation with a standard normal prior on the internal scale.
    pub fn correlation(name: impl Into<String>) -> Self {
        HyperParam {
            name: name.into(),
            transform: HyperTransform::LogitCorrelation,
            prior: HyperPrior::Normal {
                mean: 0.0,
                precision: 1.0,
            },
            initial: 0.0,
            fixed: false,
        }
    }

    pub fn with_prior(mut self, prior: HyperPrior) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_initial(mut self, initial: f64) -> Self {
        self.initial = initial;
        self
    }

    /// Fix at `value` on the internal scale.
    pub fn fixed_at(mut self, value: f64) -> Self {
        self.initial = value;
        self.fixed = true;
        self
    }
}
