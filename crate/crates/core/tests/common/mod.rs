//! Shared instance builders and independent oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use pbl_core::rng::{std_normal, stream_rng};
use pbl_core::{DesignMatrix, ModelConfig};

/// Gaussian design with a random linear signal plus noise.
pub fn random_design(seed: u64, n: usize, d: usize) -> DesignMatrix {
    let mut rng = stream_rng(seed, 77);
    let w: Vec<f64> = (0..d).map(|_| std_normal(&mut rng)).collect();
    let phi = DMatrix::from_fn(n, d, |_, _| std_normal(&mut rng));
    let y = DVector::from_fn(n, |i, _| {
        (0..d).map(|j| phi[(i, j)] * w[j]).sum::<f64>() + 0.5 * std_normal(&mut rng)
    });
    DesignMatrix::new(phi, y).unwrap()
}

/// `−ln N(y | 0, σπ² ΦΦᵀ + σ² I)`, the evidence in data space.
pub fn marginal_nle(design: &DesignMatrix, cfg: &ModelConfig) -> f64 {
    let n = design.n();
    if n == 0 {
        return 0.0;
    }
    let phi = design.phi();
    let cov = phi * phi.transpose() * cfg.prior_var + DMatrix::identity(n, n) * cfg.noise_var;
    let lu = cov.clone().lu();
    let alpha = lu.solve(design.labels()).unwrap();
    0.5 * (lu.determinant().ln() + design.labels().dot(&alpha) + n as f64 * (2.0 * PI).ln())
}

/// `KL(N(m, S) ‖ N(0, s I))` with `S` given explicitly.
pub fn kl_to_isotropic(m: &DVector<f64>, cov: &DMatrix<f64>, s: f64) -> f64 {
    let d = m.len() as f64;
    let det = cov.clone().lu().determinant();
    0.5 * (cov.trace() / s + m.norm_squared() / s - d + d * s.ln() - det.ln())
}

/// `n E_{N(m, S)} L̂_nll`.
pub fn gibbs_nll_total(
    design: &DesignMatrix,
    cfg: &ModelConfig,
    m: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> f64 {
    let n = design.n() as f64;
    let rss = (design.labels() - design.phi() * m).norm_squared();
    let tr = (design.gram() * cov).trace();
    n * 0.5 * (2.0 * PI * cfg.noise_var).ln() + (rss + tr) / (2.0 * cfg.noise_var)
}

/// Posterior covariance by explicit inversion.
pub fn explicit_covariance(design: &DesignMatrix, cfg: &ModelConfig) -> DMatrix<f64> {
    let d = design.d();
    let a = design.gram() / cfg.noise_var + DMatrix::identity(d, d) / cfg.prior_var;
    a.try_inverse().unwrap()
}
