//! Bayesian linear regression with exact marginal likelihood, and the
//! PAC-Bayesian generalization bounds that connect to it.
//!
//! Under the negative log-likelihood loss, the Gibbs posterior minimizing
//! `n·E_ρ L̂ + KL(ρ‖π)` is the Bayesian posterior and the minimum equals the
//! negative log marginal likelihood. This crate computes both sides of that
//! identity for conjugate linear regression, evaluates bounded, sub-Gaussian
//! and sub-gamma bounds, and ships Monte-Carlo oracles that check them.

pub mod blr;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod subgamma;
pub mod tasks;

pub use blr::{
    evidence_decomposition, fit_posterior, gaussian_kl, gibbs_expected_empirical_nll,
    log_gibbs_posterior_density, neg_log_evidence, EvidenceReport, GaussianPosterior, ModelConfig,
};
pub use error::{PblError, Result};
pub use losses::{LossSpec, McEstimate};
pub use subgamma::{GaussianSetting, SubGammaParams};
pub use tasks::{Dataset, DesignMatrix, LinearTaskSpec, SineTaskSpec};
