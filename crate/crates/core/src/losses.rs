//! Regression losses and Monte-Carlo Gibbs risk estimation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blr::GaussianPosterior;
use crate::error::{ensure, PblError, Result};
use crate::oracle::sample_posterior;
use crate::tasks::{dot, DesignMatrix};

/// Loss of a linear predictor. Every supported loss depends on
/// `(w, x, y)` only through the residual `y − w·φ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Nll {
        sigma2: f64,
    },
    Squared,
    Cropped {
        inner: Box<LossSpec>,
        a: f64,
        b: f64,
    },
}

impl LossSpec {
    pub fn nll(sigma2: f64) -> Result<Self> {
        ensure(sigma2 > 0.0 && sigma2.is_finite(), || {
            format!("nll noise variance {sigma2} must be positive")
        })?;
        Ok(LossSpec::Nll { sigma2 })
    }

    pub fn cropped(inner: LossSpec, a: f64, b: f64) -> Result<Self> {
        ensure(a.is_finite() && b.is_finite() && a < b, || {
            format!("crop interval [{a}, {b}] must be finite with a < b")
        })?;
        Ok(LossSpec::Cropped {
            inner: Box::new(inner),
            a,
            b,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Nll { sigma2 } => LossSpec::nll(*sigma2).map(|_| ()),
            LossSpec::Squared => Ok(()),
            LossSpec::Cropped { inner, a, b } => {
                inner.validate()?;
                LossSpec::cropped(LossSpec::Squared, *a, *b).map(|_| ())
            }
        }
    }

    /// Loss value for residual `r = y − w·φ(x)`.
    pub fn of_residual(&self, r: f64) -> f64 {
        match self {
            LossSpec::Nll { sigma2 } => 0.5 * (2.0 * PI * sigma2).ln() + r * r / (2.0 * sigma2),
            LossSpec::Squared => r * r,
            LossSpec::Cropped { inner, a, b } => crop(inner.of_residual(r), *a, *b),
        }
    }

    pub fn eval(&self, w: &[f64], features: &[f64], y: f64) -> f64 {
        self.of_residual(y - dot(w, features))
    }

    /// The `[a, b]` range for cropped losses.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            LossSpec::Cropped { a, b, .. } => Some((*a, *b)),
            _ => None,
        }
    }
}

/// `½ ln(2πσ²) + (y − w·φ)²/(2σ²)`.
pub fn nll_loss(w: &[f64], sigma2: f64, features: &[f64], y: f64) -> f64 {
    LossSpec::Nll { sigma2 }.eval(w, features, y)
}

/// `(w·φ − y)²`.
pub fn squared_loss(w: &[f64], features: &[f64], y: f64) -> f64 {
    let r = dot(w, features) - y;
    r * r
}

pub fn crop(value: f64, a: f64, b: f64) -> f64 {
    value.min(b).max(a)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let m = values.len();
        let mean = values.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0)
        } else {
            0.0
        };
        McEstimate {
            estimate: mean,
            std_err: (var / m as f64).sqrt(),
            samples: m,
        }
    }
}

/// Upper bound on the number of `n × k` prediction entries held at once.
const PREDICTION_BLOCK: usize = 1 << 22;

/// Monte-Carlo estimate of `E_{w~ρ} L̂(w)` for an arbitrary loss.
///
/// Draws `m` weights from the posterior; each contributes the dataset
/// average of the per-example loss (cropping, if any, is applied per
/// example before averaging).
pub fn empirical_gibbs_risk_mc(
    post: &GaussianPosterior,
    design: &DesignMatrix,
    loss: &LossSpec,
    m: usize,
    seed: u64,
) -> Result<McEstimate> {
    ensure(m >= 2, || {
        format!("need at least 2 posterior samples, got {m}")
    })?;
    ensure(design.n() >= 1, || {
        "empirical risk needs at least one example".into()
    })?;
    loss.validate()?;
    if post.dim() != design.d() {
        return Err(PblError::DimensionMismatch {
            expected: design.d(),
            got: post.dim(),
        });
    }
    let weights = sample_posterior(post, m, seed)?;
    let per_weight = dataset_average_losses(design, loss, &weights);
    match loss.range() {
        Some((a, b)) => {
            // rounding in the averages can step a few ulps outside [a, b]
            let clamped: Vec<f64> = per_weight.iter().map(|v| v.clamp(a, b)).collect();
            let mut est = McEstimate::from_samples(&clamped);
            est.estimate = est.estimate.clamp(a, b);
            Ok(est)
        }
        None => Ok(McEstimate::from_samples(&per_weight)),
    }
}

/// Average loss over the dataset for each weight column of `weights`.
pub(crate) fn dataset_average_losses(
    design: &DesignMatrix,
    loss: &LossSpec,
    weights: &DMatrix<f64>,
) -> Vec<f64> {
    let n = design.n();
    let m = weights.ncols();
    let block = (PREDICTION_BLOCK / n.max(1)).clamp(1, 256);
    let labels = design.labels();
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let k = block.min(m - start);
        let preds = design.phi() * weights.columns(start, k);
        for col in preds.column_iter() {
            let total: f64 = col
                .iter()
                .zip(labels.iter())
                .map(|(p, y)| loss.of_residual(y - p))
                .sum();
            out.push(total / n as f64);
        }
        start += k;
    }
    out
}
