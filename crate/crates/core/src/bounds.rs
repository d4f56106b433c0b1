//! PAC-Bayesian generalization bounds as pure functions of their inputs.
//!
//! Notation: `emp` is the empirical Gibbs risk `E_ρ L̂`, `kl` is `KL(ρ‖π)`,
//! `n` the sample size and `delta` the confidence parameter. The evidence
//! forms take `−ln Z` instead of `(emp, kl)` and are evaluated in log space so
//! that `Z` never has to be materialized.

use serde::{Deserialize, Serialize};

use crate::blr::GaussianPosterior;
use crate::error::{ensure, PblError, Result};
use crate::losses::{LossSpec, McEstimate};
use crate::oracle::sample_posterior;
use crate::rng::stream_rng;
use crate::subgamma::SubGammaParams;
use crate::tasks::{dot, LinearTaskSpec};

/// Slack tolerated on KL values that are mathematically non-negative.
const KL_SLACK: f64 = 1e-10;

fn check_common(kl: f64, n: usize, delta: f64) -> Result<()> {
    ensure(n >= 1, || "sample size must be at least 1".into())?;
    ensure(delta > 0.0 && delta <= 1.0, || {
        format!("delta = {delta} must lie in (0, 1]")
    })?;
    ensure(kl >= -KL_SLACK && kl.is_finite(), || {
        format!("kl = {kl} must be finite and >= 0")
    })
}

fn check_range(a: f64, b: f64) -> Result<()> {
    ensure(a.is_finite() && b.is_finite() && a < b, || {
        format!("loss range [{a}, {b}] must be finite with a < b")
    })
}

fn check_subgamma(s2: f64, c: f64) -> Result<()> {
    ensure(s2 >= 0.0 && s2.is_finite(), || {
        format!("s2 = {s2} must be finite and >= 0")
    })?;
    ensure(c >= 0.0, || format!("c = {c} must be >= 0"))?;
    if c >= 1.0 {
        return Err(PblError::ScaleTooLarge(c));
    }
    Ok(())
}

/// `(b − a)/(1 − e^{a−b})`.
fn catoni_scale(a: f64, b: f64) -> f64 {
    (b - a) / -(a - b).exp_m1()
}

/// Catoni's bound rescaled to an `[a, b]`-valued loss.
pub fn catoni_bound(emp: f64, kl: f64, n: usize, delta: f64, a: f64, b: f64) -> Result<f64> {
    check_common(kl, n, delta)?;
    check_range(a, b)?;
    if !(a..=b).contains(&emp) {
        return Err(PblError::EmpiricalRiskOutOfRange { emp, a, b });
    }
    let exponent = -emp + a - (kl.max(0.0) - delta.ln()) / n as f64;
    Ok(a + catoni_scale(a, b) * -exponent.exp_m1())
}

/// Catoni's bound for the NLL loss under the Gibbs posterior, written with
/// the marginal likelihood: `a + (b−a)/(1−e^{a−b}) [1 − e^a (Z δ)^{1/n}]`.
pub fn catoni_evidence_bound(
    neg_log_evidence: f64,
    n: usize,
    delta: f64,
    a: f64,
    b: f64,
) -> Result<f64> {
    check_common(0.0, n, delta)?;
    check_range(a, b)?;
    ensure(neg_log_evidence.is_finite(), || {
        "negative log evidence must be finite".into()
    })?;
    let exponent = a + (delta.ln() - neg_log_evidence) / n as f64;
    Ok(a + catoni_scale(a, b) * -exponent.exp_m1())
}

/// Hoeffding-lemma bound on `Ψ(λ, n)` for an `[a, b]`-valued loss.
pub fn hoeffding_psi_bound(lambda: f64, n: usize, a: f64, b: f64) -> Result<f64> {
    ensure(lambda > 0.0, || {
        format!("lambda = {lambda} must be positive")
    })?;
    ensure(n >= 1, || "sample size must be at least 1".into())?;
    let width = b - a;
    Ok(lambda * lambda * width * width / (2.0 * n as f64))
}

/// `emp + (kl + ln(1/δ) + Ψ)/λ`.
pub fn alquier_bound(
    emp: f64,
    kl: f64,
    n: usize,
    delta: f64,
    lambda: f64,
    psi_bound: f64,
) -> Result<f64> {
    check_common(kl, n, delta)?;
    ensure(lambda > 0.0, || {
        format!("lambda = {lambda} must be positive")
    })?;
    ensure(psi_bound >= 0.0, || {
        format!("psi bound {psi_bound} must be >= 0")
    })?;
    Ok(emp + (kl.max(0.0) - delta.ln() + psi_bound) / lambda)
}

/// Alquier's bound with Hoeffding's `Ψ` for a cropped loss at a given `λ`.
pub fn alquier_hoeffding_bound(
    emp: f64,
    kl: f64,
    n: usize,
    delta: f64,
    lambda: f64,
    a: f64,
    b: f64,
) -> Result<f64> {
    check_range(a, b)?;
    let psi = hoeffding_psi_bound(lambda, n, a, b)?;
    alquier_bound(emp, kl, n, delta, lambda, psi)
}

pub fn subgaussian_bound(emp: f64, kl: f64, n: usize, delta: f64, s2: f64) -> Result<f64> {
    subgamma_bound(emp, kl, n, delta, s2, 0.0)
}

/// `emp + (kl + ln(1/δ))/n + s²/(2(1−c))`.
pub fn subgamma_bound(emp: f64, kl: f64, n: usize, delta: f64, s2: f64, c: f64) -> Result<f64> {
    check_common(kl, n, delta)?;
    check_subgamma(s2, c)?;
    Ok(emp + (kl.max(0.0) - delta.ln()) / n as f64 + s2 / (2.0 * (1.0 - c)))
}

/// `s²/(2(1−c)) − ln(Z δ)/n`.
pub fn subgamma_evidence_bound(
    neg_log_evidence: f64,
    n: usize,
    delta: f64,
    s2: f64,
    c: f64,
) -> Result<f64> {
    check_common(0.0, n, delta)?;
    check_subgamma(s2, c)?;
    ensure(neg_log_evidence.is_finite(), || {
        "negative log evidence must be finite".into()
    })?;
    Ok(s2 / (2.0 * (1.0 - c)) + (neg_log_evidence - delta.ln()) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFamily {
    Catoni,
    CatoniEvidence,
    AlquierHoeffding,
    Subgaussian,
    Subgamma,
    SubgammaEvidence,
}

impl BoundFamily {
    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Catoni => "catoni",
            BoundFamily::CatoniEvidence => "catoni_evidence",
            BoundFamily::AlquierHoeffding => "alquier_hoeffding",
            BoundFamily::Subgaussian => "subgaussian",
            BoundFamily::Subgamma => "subgamma",
            BoundFamily::SubgammaEvidence => "subgamma_evidence",
        }
    }
}

/// Everything any bound family may need. Each family checks for the
/// optional fields it requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub emp_gibbs_risk: f64,
    pub kl: f64,
    pub n: usize,
    pub delta: f64,
    pub range: Option<(f64, f64)>,
    pub lambda: Option<f64>,
    pub subgamma: Option<SubGammaParams>,
    pub neg_log_evidence: Option<f64>,
}

impl BoundInputs {
    pub fn new(emp_gibbs_risk: f64, kl: f64, n: usize, delta: f64) -> Self {
        BoundInputs {
            emp_gibbs_risk,
            kl,
            n,
            delta,
            range: None,
            lambda: None,
            subgamma: None,
            neg_log_evidence: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub family: BoundFamily,
    pub value: f64,
    pub emp_gibbs_risk: f64,
    pub kl: f64,
    pub n: usize,
    pub delta: f64,
    pub neg_log_evidence: Option<f64>,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub s2: Option<f64>,
    pub c: Option<f64>,
}

fn missing(family: BoundFamily, field: &str) -> PblError {
    PblError::InvalidParameter(format!("{} bound requires `{field}`", family.name()))
}

pub fn evaluate(family: BoundFamily, inputs: &BoundInputs) -> Result<BoundReport> {
    let BoundInputs {
        emp_gibbs_risk: emp,
        kl,
        n,
        delta,
        ..
    } = *inputs;
    let range = || inputs.range.ok_or_else(|| missing(family, "range"));
    let sg = || inputs.subgamma.ok_or_else(|| missing(family, "subgamma"));
    let nle = || {
        inputs
            .neg_log_evidence
            .ok_or_else(|| missing(family, "neg_log_evidence"))
    };
    let value = match family {
        BoundFamily::Catoni => {
            let (a, b) = range()?;
            catoni_bound(emp, kl, n, delta, a, b)?
        }
        BoundFamily::CatoniEvidence => {
            let (a, b) = range()?;
            catoni_evidence_bound(nle()?, n, delta, a, b)?
        }
        BoundFamily::AlquierHoeffding => {
            let (a, b) = range()?;
            let lambda = inputs.lambda.ok_or_else(|| missing(family, "lambda"))?;
            alquier_hoeffding_bound(emp, kl, n, delta, lambda, a, b)?
        }
        BoundFamily::Subgaussian => subgaussian_bound(emp, kl, n, delta, sg()?.s2)?,
        BoundFamily::Subgamma => {
            let p = sg()?;
            subgamma_bound(emp, kl, n, delta, p.s2, p.c)?
        }
        BoundFamily::SubgammaEvidence => {
            let p = sg()?;
            subgamma_evidence_bound(nle()?, n, delta, p.s2, p.c)?
        }
    };
    if !value.is_finite() {
        return Err(PblError::NonFinite("bound value"));
    }
    Ok(BoundReport {
        family,
        value,
        emp_gibbs_risk: emp,
        kl,
        n,
        delta,
        neg_log_evidence: inputs.neg_log_evidence,
        lambda: inputs.lambda,
        a: inputs.range.map(|r| r.0),
        b: inputs.range.map(|r| r.1),
        s2: inputs.subgamma.map(|p| p.s2),
        c: inputs.subgamma.map(|p| p.c),
    })
}

/// Risk of the posterior-mean predictor next to the Gibbs risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub mean_pred_risk: McEstimate,
    pub gibbs_risk: McEstimate,
    /// Paired estimate of `gibbs_risk − mean_pred_risk`.
    pub gap: McEstimate,
}

/// Monte-Carlo comparison of `L_D(ŵ)` with `E_ρ L_D(w)` on fresh draws from
/// `task`. Each test point is paired with one independent posterior sample.
pub fn jensen_mean_predictor_risk(
    post: &GaussianPosterior,
    task: &LinearTaskSpec,
    loss: &LossSpec,
    m: usize,
    seed: u64,
) -> Result<JensenReport> {
    ensure(m >= 2, || format!("need at least 2 draws, got {m}"))?;
    if matches!(loss, LossSpec::Cropped { .. }) {
        return Err(PblError::InvalidParameter(
            "Jensen comparison needs a loss convex in the prediction".into(),
        ));
    }
    loss.validate()?;
    task.validate()?;
    if task.d() != post.dim() {
        return Err(PblError::DimensionMismatch {
            expected: task.d(),
            got: post.dim(),
        });
    }
    let weights = sample_posterior(post, m, seed)?;
    let mut rng = stream_rng(seed, 1);
    let (xs, ys) = task.sample(m, &mut rng);
    let mean: Vec<f64> = post.mean().iter().copied().collect();
    let mut at_mean = Vec::with_capacity(m);
    let mut gibbs = Vec::with_capacity(m);
    for (j, (x, y)) in xs.iter().zip(&ys).enumerate() {
        let w = weights.column(j);
        at_mean.push(loss.of_residual(y - dot(&mean, x)));
        gibbs.push(loss.of_residual(y - w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()));
    }
    let gap: Vec<f64> = gibbs.iter().zip(&at_mean).map(|(g, a)| g - a).collect();
    Ok(JensenReport {
        mean_pred_risk: McEstimate::from_samples(&at_mean),
        gibbs_risk: McEstimate::from_samples(&gibbs),
        gap: McEstimate::from_samples(&gap),
    })
}
