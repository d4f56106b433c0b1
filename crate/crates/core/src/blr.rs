//! Conjugate Bayesian linear regression with an isotropic Gaussian prior.
//!
//! With likelihood `N(y | w·φ(x), σ²)` and prior `N(0, σπ² I)` the posterior
//! is `N(ŵ, A⁻¹)` where `A = ΦᵀΦ/σ² + I/σπ²` and `ŵ = A⁻¹Φᵀy/σ²`. This
//! posterior is also the Gibbs posterior that minimizes
//! `n·E_ρ L̂_nll + KL(ρ‖π)`, and the minimum value equals `−ln Z`, the negative
//! log marginal likelihood. [`evidence_decomposition`] evaluates both sides.
//!
//! Every solve and log-determinant goes through the Cholesky factor of `A`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, PblError, Result};
use crate::tasks::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Likelihood noise variance `σ²`.
    pub noise_var: f64,
    /// Prior variance `σπ²`.
    pub prior_var: f64,
}

impl ModelConfig {
    pub fn new(noise_var: f64, prior_var: f64) -> Result<Self> {
        let cfg = ModelConfig {
            noise_var,
            prior_var,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.noise_var > 0.0 && self.noise_var.is_finite(), || {
            format!(
                "noise variance {} must be positive and finite",
                self.noise_var
            )
        })?;
        ensure(self.prior_var > 0.0 && self.prior_var.is_finite(), || {
            format!(
                "prior variance {} must be positive and finite",
                self.prior_var
            )
        })
    }

    /// `½ ln(2πσ²)`, the per-example constant of the NLL loss.
    pub fn nll_constant(&self) -> f64 {
        0.5 * (2.0 * PI * self.noise_var).ln()
    }
}

/// `N(ŵ, A⁻¹)` stored by its mean, precision and the Cholesky factor of the
/// precision.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        if !precision.is_square() || precision.nrows() != mean.len() {
            return Err(PblError::DimensionMismatch {
                expected: mean.len(),
                got: precision.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(PblError::NonFinite("posterior mean"));
        }
        if precision.iter().any(|v| !v.is_finite()) {
            return Err(PblError::NonFinite("posterior precision"));
        }
        let chol = Cholesky::new(precision.clone()).ok_or(PblError::Cholesky)?;
        Ok(GaussianPosterior {
            mean,
            precision,
            chol,
        })
    }

    /// The prior `N(0, σπ² I)` viewed as a posterior with no data.
    pub fn prior(d: usize, cfg: &ModelConfig) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d) / cfg.prior_var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Lower-triangular `L` with `A = L Lᵀ`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `ln |A|`.
    pub fn log_det_precision(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }

    /// `A⁻¹`, obtained by solving against the identity columns.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.solve(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// `tr(A⁻¹)`.
    pub fn covariance_trace(&self) -> f64 {
        self.covariance().trace()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// Posterior-mean prediction `ŵ·φ`.
    pub fn predict_mean(&self, features: &[f64]) -> f64 {
        self.mean.iter().zip(features).map(|(a, b)| a * b).sum()
    }

    /// Predictive variance of `w·φ` under the posterior: `φᵀA⁻¹φ`.
    pub fn predict_var(&self, features: &[f64]) -> f64 {
        let phi = DVector::from_column_slice(features);
        let mut z = phi.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut z);
        // l_dirty keeps garbage above the diagonal; only the lower part is read.
        z.norm_squared()
    }
}

/// Negative log evidence split into its PAC-Bayesian trade-off terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub neg_log_evidence: f64,
    /// `n · E_{w~ρ*} L̂_nll(w)`.
    pub gibbs_emp_risk_total: f64,
    pub kl: f64,
    pub n: usize,
    pub d: usize,
    pub sigma2: f64,
    pub sigma_pi2: f64,
}

impl EvidenceReport {
    /// `|−ln Z − (n E L̂ + KL)|`.
    pub fn identity_residual(&self) -> f64 {
        (self.neg_log_evidence - (self.gibbs_emp_risk_total + self.kl)).abs()
    }
}

fn check_dims(post: &GaussianPosterior, design: &DesignMatrix) -> Result<()> {
    if post.dim() != design.d() {
        return Err(PblError::DimensionMismatch {
            expected: design.d(),
            got: post.dim(),
        });
    }
    Ok(())
}

pub fn fit_posterior(design: &DesignMatrix, cfg: &ModelConfig) -> Result<GaussianPosterior> {
    cfg.validate()?;
    let d = design.d();
    let precision = design.gram() / cfg.noise_var + DMatrix::identity(d, d) / cfg.prior_var;
    let chol = Cholesky::new(precision.clone()).ok_or(PblError::Cholesky)?;
    let rhs = design.phi_t_y() / cfg.noise_var;
    let mean = chol.solve(&rhs);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(PblError::NonFinite("posterior mean"));
    }
    Ok(GaussianPosterior {
        mean,
        precision,
        chol,
    })
}

/// `‖y − Φw‖²`.
pub fn residual_sq_norm(design: &DesignMatrix, w: &DVector<f64>) -> Result<f64> {
    if w.len() != design.d() {
        return Err(PblError::DimensionMismatch {
            expected: design.d(),
            got: w.len(),
        });
    }
    Ok((design.labels() - design.phi() * w).norm_squared())
}

/// `n·L̂_nll(w) = (n/2) ln(2πσ²) + ‖y − Φw‖²/(2σ²)`.
pub fn total_empirical_nll(
    design: &DesignMatrix,
    cfg: &ModelConfig,
    w: &DVector<f64>,
) -> Result<f64> {
    let rss = residual_sq_norm(design, w)?;
    Ok(design.n() as f64 * cfg.nll_constant() + rss / (2.0 * cfg.noise_var))
}

/// `ln N(w | 0, σπ² I)`.
pub fn log_prior_density(w: &DVector<f64>, cfg: &ModelConfig) -> f64 {
    let d = w.len() as f64;
    -0.5 * d * (2.0 * PI * cfg.prior_var).ln() - w.norm_squared() / (2.0 * cfg.prior_var)
}

/// `−ln p(Y | X)` in its classic closed form.
pub fn neg_log_evidence(design: &DesignMatrix, cfg: &ModelConfig) -> Result<f64> {
    let post = fit_posterior(design, cfg)?;
    neg_log_evidence_with(&post, design, cfg)
}

fn neg_log_evidence_with(
    post: &GaussianPosterior,
    design: &DesignMatrix,
    cfg: &ModelConfig,
) -> Result<f64> {
    check_dims(post, design)?;
    let n = design.n() as f64;
    let d = design.d() as f64;
    let rss = residual_sq_norm(design, post.mean())?;
    Ok(rss / (2.0 * cfg.noise_var)
        + 0.5 * n * (2.0 * PI * cfg.noise_var).ln()
        + post.mean().norm_squared() / (2.0 * cfg.prior_var)
        + 0.5 * post.log_det_precision()
        + 0.5 * d * cfg.prior_var.ln())
}

/// `KL(N(ŵ, A⁻¹) ‖ N(0, σπ² I))`.
pub fn gaussian_kl(post: &GaussianPosterior, cfg: &ModelConfig) -> Result<f64> {
    cfg.validate()?;
    let d = post.dim() as f64;
    Ok(0.5
        * (post.covariance_trace() / cfg.prior_var + post.mean().norm_squared() / cfg.prior_var
            - d
            + post.log_det_precision()
            + d * cfg.prior_var.ln()))
}

/// `n·E_{w~ρ} L̂_nll(w) = n·L̂_nll(ŵ) + tr(ΦᵀΦ A⁻¹)/(2σ²)`.
pub fn gibbs_expected_empirical_nll(
    post: &GaussianPosterior,
    design: &DesignMatrix,
    cfg: &ModelConfig,
) -> Result<f64> {
    check_dims(post, design)?;
    let at_mean = total_empirical_nll(design, cfg, post.mean())?;
    let spread = post.solve(design.gram()).trace();
    Ok(at_mean + spread / (2.0 * cfg.noise_var))
}

pub fn evidence_decomposition(design: &DesignMatrix, cfg: &ModelConfig) -> Result<EvidenceReport> {
    let post = fit_posterior(design, cfg)?;
    evidence_decomposition_with(&post, design, cfg)
}

/// Same as [`evidence_decomposition`] for an already fitted posterior.
pub fn evidence_decomposition_with(
    post: &GaussianPosterior,
    design: &DesignMatrix,
    cfg: &ModelConfig,
) -> Result<EvidenceReport> {
    Ok(EvidenceReport {
        neg_log_evidence: neg_log_evidence_with(post, design, cfg)?,
        gibbs_emp_risk_total: gibbs_expected_empirical_nll(post, design, cfg)?,
        kl: gaussian_kl(post, cfg)?,
        n: design.n(),
        d: design.d(),
        sigma2: cfg.noise_var,
        sigma_pi2: cfg.prior_var,
    })
}

/// `ln N(w | ŵ, A⁻¹)`.
pub fn log_gibbs_posterior_density(post: &GaussianPosterior, w: &DVector<f64>) -> Result<f64> {
    if w.len() != post.dim() {
        return Err(PblError::DimensionMismatch {
            expected: post.dim(),
            got: w.len(),
        });
    }
    // (w−ŵ)ᵀA(w−ŵ) = ‖Lᵀ(w−ŵ)‖²
    let diff = w - post.mean();
    let lt_diff = post.chol_factor().transpose() * diff;
    let d = post.dim() as f64;
    Ok(0.5 * post.log_det_precision() - 0.5 * d * (2.0 * PI).ln() - 0.5 * lt_diff.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_design(x: f64, y: f64) -> DesignMatrix {
        DesignMatrix::new(DMatrix::from_element(1, 1, x), DVector::from_element(1, y)).unwrap()
    }

    fn empty_design(d: usize) -> DesignMatrix {
        DesignMatrix::new(DMatrix::zeros(0, d), DVector::zeros(0)).unwrap()
    }

    #[test]
    fn empty_data_recovers_prior() {
        let cfg = ModelConfig::new(1.0, 1.0).unwrap();
        let post = fit_posterior(&empty_design(2), &cfg).unwrap();
        assert_eq!(post.precision(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(post.mean(), &DVector::<f64>::zeros(2));
        let rep = evidence_decomposition(&empty_design(2), &cfg).unwrap();
        assert_relative_eq!(rep.neg_log_evidence, 0.0, epsilon = 1e-14);
        assert_relative_eq!(rep.gibbs_emp_risk_total, 0.0, epsilon = 1e-14);
        assert_relative_eq!(rep.kl, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn single_point_posterior() {
        let cfg = ModelConfig::new(1.0, 1.0).unwrap();
        let post = fit_posterior(&unit_design(1.0, 1.0), &cfg).unwrap();
        assert_relative_eq!(post.precision()[(0, 0)], 2.0);
        assert_relative_eq!(post.mean()[0], 0.5);
    }

    #[test]
    fn single_point_evidence_matches_marginal_density() {
        let cfg = ModelConfig::new(1.0, 1.0).unwrap();
        // y ~ N(0, σπ²x² + σ²) = N(0, 2)
        let expected = 0.5 * (4.0 * PI).ln() + 0.25;
        let got = neg_log_evidence(&unit_design(1.0, 1.0), &cfg).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        assert_relative_eq!(got, 1.5155, epsilon = 1e-4);

        let got = neg_log_evidence(&unit_design(0.0, 0.0), &cfg).unwrap();
        assert_relative_eq!(got, 0.5 * (2.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_point_kl_and_gibbs_risk() {
        let cfg = ModelConfig::new(1.0, 1.0).unwrap();
        let design = unit_design(1.0, 1.0);
        let post = fit_posterior(&design, &cfg).unwrap();
        // KL(N(0.5, 1/2) ‖ N(0, 1)) = ½(½ + ¼ − 1 − ln ½)
        let kl_oracle = 0.5 * (0.5 + 0.25 - 1.0 - 0.5f64.ln());
        assert_relative_eq!(
            gaussian_kl(&post, &cfg).unwrap(),
            kl_oracle,
            epsilon = 1e-12
        );
        assert_relative_eq!(kl_oracle, 0.2216, epsilon = 1e-4);

        let gibbs = gibbs_expected_empirical_nll(&post, &design, &cfg).unwrap();
        assert_relative_eq!(gibbs, 0.5 * (2.0 * PI).ln() + 0.125 + 0.25, epsilon = 1e-12);

        let rep = evidence_decomposition(&design, &cfg).unwrap();
        assert_relative_eq!(rep.gibbs_emp_risk_total, 1.2939, epsilon = 1e-4);
        assert_relative_eq!(rep.kl, 0.2216, epsilon = 1e-4);
        assert_relative_eq!(rep.neg_log_evidence, 1.5155, epsilon = 1e-4);
        assert!(rep.identity_residual() < 1e-12);
    }

    #[test]
    fn kl_of_prior_is_zero() {
        let cfg = ModelConfig::new(0.3, 2.5).unwrap();
        let prior = GaussianPosterior::prior(4, &cfg).unwrap();
        assert!(gaussian_kl(&prior, &cfg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mode_density() {
        let post = GaussianPosterior::new(
            DVector::from_element(1, 0.5),
            DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let got = log_gibbs_posterior_density(&post, &DVector::from_element(1, 0.5)).unwrap();
        assert_relative_eq!(
            got,
            0.5 * 2f64.ln() - 0.5 * (2.0 * PI).ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(got, -0.5724, epsilon = 1e-4);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(ModelConfig::new(0.0, 1.0).is_err());
        assert!(ModelConfig::new(1.0, -1.0).is_err());
        assert!(ModelConfig::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn predictive_variance_matches_covariance() {
        let precision = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let post = GaussianPosterior::new(DVector::zeros(2), precision).unwrap();
        let phi = [0.7, -1.3];
        let v = DVector::from_column_slice(&phi);
        let direct = (v.transpose() * post.covariance() * &v)[(0, 0)];
        assert_relative_eq!(post.predict_var(&phi), direct, epsilon = 1e-12);
    }
}
