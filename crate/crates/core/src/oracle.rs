//! Monte-Carlo oracles: exact posterior sampling, generalization risk of the
//! Gibbs predictor, and the frequentist coverage study of the bounds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blr::{evidence_decomposition_with, fit_posterior, GaussianPosterior, ModelConfig};
use crate::bounds::{
    alquier_hoeffding_bound, catoni_bound, subgamma_bound, subgamma_evidence_bound,
};
use crate::error::{ensure, PblError, Result};
use crate::losses::{empirical_gibbs_risk_mc, LossSpec, McEstimate};
use crate::rng::{derive_seed, std_normal, stream_rng};
use crate::subgamma::{nll_subgamma_params, GaussianSetting, SubGammaParams};
use crate::tasks::{gen_linear_task, DesignMatrix, LinearTaskSpec};

/// `m` exact draws from `N(ŵ, A⁻¹)`, one per column: `ŵ + L⁻ᵀz`.
pub fn sample_posterior(post: &GaussianPosterior, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    ensure(m >= 1, || "need at least one posterior sample".into())?;
    let d = post.dim();
    let mut rng = stream_rng(seed, 0);
    let z = DMatrix::from_fn(d, m, |_, _| std_normal(&mut rng));
    let upper = post.chol_factor().transpose();
    let mut w = upper.solve_upper_triangular(&z).ok_or(PblError::Cholesky)?;
    for mut col in w.column_iter_mut() {
        col += post.mean();
    }
    Ok(w)
}

/// Stream id of the fresh test draws used for cropped losses.
const TEST_STREAM: u64 = 1;

/// Monte-Carlo estimate of `E_{w~ρ} L_D(w)` on the linear task.
///
/// Squared and NLL losses use the exact inner expectation
/// `E (y − w·x)² = σx²‖w* − w‖² + σε²` for each sampled weight. Cropped losses
/// have no closed form, so each weight is scored on its own `m_test` fresh
/// draws from the task.
pub fn gibbs_generalization_risk(
    post: &GaussianPosterior,
    task: &LinearTaskSpec,
    loss: &LossSpec,
    m_weights: usize,
    m_test: usize,
    seed: u64,
) -> Result<McEstimate> {
    task.validate()?;
    loss.validate()?;
    ensure(m_weights >= 2, || {
        format!("need at least 2 posterior samples, got {m_weights}")
    })?;
    if task.d() != post.dim() {
        return Err(PblError::DimensionMismatch {
            expected: task.d(),
            got: post.dim(),
        });
    }
    let weights = sample_posterior(post, m_weights, seed)?;
    let per_weight: Vec<f64> = match loss {
        LossSpec::Squared | LossSpec::Nll { .. } => weights
            .column_iter()
            .map(|w| closed_form_risk(task, loss, w.as_slice()))
            .collect(),
        LossSpec::Cropped { .. } => {
            ensure(m_test >= 1, || "cropped risk needs m_test >= 1".into())?;
            let mut rng = stream_rng(seed, TEST_STREAM);
            weights
                .column_iter()
                .map(|w| {
                    let (xs, ys) = task.sample(m_test, &mut rng);
                    let total: f64 = xs
                        .iter()
                        .zip(&ys)
                        .map(|(x, y)| loss.eval(w.as_slice(), x, *y))
                        .sum();
                    total / m_test as f64
                })
                .collect()
        }
    };
    Ok(McEstimate::from_samples(&per_weight))
}

/// Exact `L_D(w)` for the squared and NLL losses.
pub fn closed_form_risk(task: &LinearTaskSpec, loss: &LossSpec, w: &[f64]) -> f64 {
    let sq = task.squared_risk(w);
    match loss {
        LossSpec::Squared => sq,
        LossSpec::Nll { sigma2 } => {
            0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() + sq / (2.0 * sigma2)
        }
        LossSpec::Cropped { .. } => panic!("cropped losses have no closed-form risk"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyFamily {
    Subgamma,
    SubgammaEvidence,
    CatoniCropped,
    AlquierSqrtNCropped,
    AlquierNCropped,
    /// Always `+∞`; exercises the bookkeeping only.
    UnboundedSentinel,
}

impl StudyFamily {
    pub fn needs_crop(self) -> bool {
        matches!(
            self,
            StudyFamily::CatoniCropped
                | StudyFamily::AlquierSqrtNCropped
                | StudyFamily::AlquierNCropped
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityStudyConfig {
    /// Data distribution; its `seed` is ignored in favour of `master_seed`.
    pub task: LinearTaskSpec,
    pub model: ModelConfig,
    pub n: usize,
    pub trials: usize,
    pub delta: f64,
    pub families: Vec<StudyFamily>,
    /// Crop interval for the bounded-loss families.
    pub crop: Option<(f64, f64)>,
    pub m_weights: usize,
    pub m_test: usize,
    pub master_seed: u64,
}

impl ValidityStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model.validate()?;
        ensure(self.trials >= 1, || "need at least one trial".into())?;
        ensure(self.n >= 1, || "need at least one training example".into())?;
        ensure(self.delta > 0.0 && self.delta <= 1.0, || {
            format!("delta = {} must lie in (0, 1]", self.delta)
        })?;
        ensure(self.m_weights >= 2, || {
            "need at least 2 posterior samples".into()
        })?;
        if self.families.iter().any(|f| f.needs_crop()) {
            let (a, b) = self.crop.ok_or_else(|| {
                PblError::InvalidParameter("cropped families need a crop interval".into())
            })?;
            LossSpec::cropped(LossSpec::Squared, a, b)?;
            ensure(self.m_test >= 1, || {
                "cropped families need m_test >= 1".into()
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyCoverage {
    pub family: StudyFamily,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    pub delta: f64,
}

impl FamilyCoverage {
    /// `rate ≤ δ + 2√(δ(1−δ)/T)`.
    pub fn within_band(&self) -> bool {
        let t = self.trials as f64;
        self.rate <= self.delta + 2.0 * (self.delta * (1.0 - self.delta) / t).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub families: Vec<FamilyCoverage>,
    pub subgamma: SubGammaParams,
    pub config: ValidityStudyConfig,
}

impl CoverageReport {
    pub fn all_within_band(&self) -> bool {
        self.families.iter().all(FamilyCoverage::within_band)
    }
}

/// Bound values and oracle risks of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    /// `(family, bound, risk estimate, risk std err)`.
    pub checks: Vec<(StudyFamily, f64, f64, f64)>,
}

impl TrialOutcome {
    fn violated(&self, family: StudyFamily) -> bool {
        self.checks
            .iter()
            .filter(|c| c.0 == family)
            .any(|&(_, bound, risk, se)| risk - 3.0 * se > bound)
    }
}

pub fn run_trial(
    cfg: &ValidityStudyConfig,
    params: &SubGammaParams,
    trial: usize,
) -> Result<TrialOutcome> {
    let trial_seed = derive_seed(cfg.master_seed, trial as u64);
    let data = gen_linear_task(&cfg.task.with_seed(trial_seed), cfg.n)?;
    let design = DesignMatrix::identity(&data, cfg.task.d())?;
    let post = fit_posterior(&design, &cfg.model)?;
    let rep = evidence_decomposition_with(&post, &design, &cfg.model)?;
    let n = cfg.n;
    let nf = n as f64;
    let nll = LossSpec::nll(cfg.model.noise_var)?;
    let nll_risk = gibbs_generalization_risk(
        &post,
        &cfg.task,
        &nll,
        cfg.m_weights,
        0,
        derive_seed(trial_seed, 1),
    )?;

    let cropped = match cfg.crop {
        Some((a, b)) if cfg.families.iter().any(|f| f.needs_crop()) => {
            let loss = LossSpec::cropped(nll.clone(), a, b)?;
            let emp = empirical_gibbs_risk_mc(
                &post,
                &design,
                &loss,
                cfg.m_weights,
                derive_seed(trial_seed, 2),
            )?;
            let risk = gibbs_generalization_risk(
                &post,
                &cfg.task,
                &loss,
                cfg.m_weights,
                cfg.m_test,
                derive_seed(trial_seed, 3),
            )?;
            // the MC mean of cropped values always lies in [a, b]
            Some((a, b, emp.estimate.clamp(a, b), risk))
        }
        _ => None,
    };

    let mut checks = Vec::with_capacity(cfg.families.len());
    for &family in &cfg.families {
        let check = match family {
            StudyFamily::Subgamma => {
                let emp = rep.gibbs_emp_risk_total / nf;
                let b = subgamma_bound(emp, rep.kl, n, cfg.delta, params.s2, params.c)?;
                (family, b, nll_risk.estimate, nll_risk.std_err)
            }
            StudyFamily::SubgammaEvidence => {
                let b = subgamma_evidence_bound(
                    rep.neg_log_evidence,
                    n,
                    cfg.delta,
                    params.s2,
                    params.c,
                )?;
                (family, b, nll_risk.estimate, nll_risk.std_err)
            }
            StudyFamily::UnboundedSentinel => {
                (family, f64::INFINITY, nll_risk.estimate, nll_risk.std_err)
            }
            StudyFamily::CatoniCropped
            | StudyFamily::AlquierSqrtNCropped
            | StudyFamily::AlquierNCropped => {
                let (a, b, emp, risk) = cropped.expect("validated crop interval");
                let bound = match family {
                    StudyFamily::CatoniCropped => catoni_bound(emp, rep.kl, n, cfg.delta, a, b)?,
                    StudyFamily::AlquierSqrtNCropped => {
                        alquier_hoeffding_bound(emp, rep.kl, n, cfg.delta, nf.sqrt(), a, b)?
                    }
                    _ => alquier_hoeffding_bound(emp, rep.kl, n, cfg.delta, nf, a, b)?,
                };
                (family, bound, risk.estimate, risk.std_err)
            }
        };
        checks.push(check);
    }
    Ok(TrialOutcome { trial, checks })
}

/// Sub-gamma parameters of the NLL loss for the study's task and prior.
pub fn study_subgamma_params(cfg: &ValidityStudyConfig) -> Result<SubGammaParams> {
    nll_subgamma_params(
        cfg.model.noise_var,
        &GaussianSetting::from_task(&cfg.task, cfg.model.prior_var),
        1.0,
    )
}

/// Repeats fit-and-bound on `trials` independent datasets and counts, per
/// family, how often the oracle risk exceeds the bound by more than three
/// Monte-Carlo standard errors.
pub fn run_validity_study(cfg: &ValidityStudyConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let params = study_subgamma_params(cfg)?;
    if params.c >= 1.0 {
        return Err(PblError::ScaleTooLarge(params.c));
    }
    let outcomes = (0..cfg.trials)
        .map(|t| run_trial(cfg, &params, t))
        .collect::<Result<Vec<_>>>()?;
    let families = cfg
        .families
        .iter()
        .map(|&family| {
            let violations = outcomes.iter().filter(|o| o.violated(family)).count();
            FamilyCoverage {
                family,
                trials: cfg.trials,
                violations,
                rate: violations as f64 / cfg.trials as f64,
                delta: cfg.delta,
            }
        })
        .collect();
    Ok(CoverageReport {
        families,
        subgamma: params,
        config: cfg.clone(),
    })
}
