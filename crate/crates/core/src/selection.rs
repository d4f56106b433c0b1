//! Model selection and model averaging over a finite family of models under
//! a uniform hyperprior.
//!
//! Selecting model `i` is bounded by the sub-gamma evidence bound at
//! confidence `δ/L`; averaging over the hyperposterior replaces `Z_i` with
//! `Σ_i Z_i / L` and avoids the union-bound penalty.

use serde::{Deserialize, Serialize};

use crate::blr::EvidenceReport;
use crate::bounds::subgamma_evidence_bound;
use crate::error::{ensure, PblError, Result};
use crate::subgamma::SubGammaParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: usize,
    /// Feature-map degree (dimension minus one for polynomial maps).
    pub degree: usize,
    pub evidence: EvidenceReport,
}

/// Models fitted on one dataset, under a uniform hyperprior.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    entries: Vec<ModelEntry>,
}

impl ModelFamily {
    pub fn new(entries: Vec<ModelEntry>) -> Result<Self> {
        let first = entries.first().ok_or(PblError::EmptyFamily)?;
        let n = first.evidence.n;
        if let Some(bad) = entries.iter().find(|e| e.evidence.n != n) {
            return Err(PblError::InvalidParameter(format!(
                "model {} was fitted on {} examples, expected {n}",
                bad.id, bad.evidence.n
            )));
        }
        Ok(ModelFamily { entries })
    }

    /// Only the uniform hyperprior `π₀ = 1/L` is supported.
    pub fn with_hyperprior(entries: Vec<ModelEntry>, hyperprior: &[f64]) -> Result<Self> {
        let family = Self::new(entries)?;
        let l = family.len();
        ensure(hyperprior.len() == l, || {
            format!("hyperprior has {} weights for {l} models", hyperprior.len())
        })?;
        let uniform = 1.0 / l as f64;
        ensure(
            hyperprior.iter().all(|w| (w - uniform).abs() <= 1e-12),
            || "only the uniform hyperprior is supported".into(),
        )?;
        Ok(family)
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n(&self) -> usize {
        self.entries[0].evidence.n
    }

    pub fn max_dim(&self) -> usize {
        self.entries.iter().map(|e| e.evidence.d).max().unwrap_or(0)
    }

    /// Model with the largest evidence; ties go to the smallest id.
    pub fn max_evidence_id(&self) -> usize {
        argmin_by_id(
            self.entries
                .iter()
                .map(|e| (e.id, e.evidence.neg_log_evidence)),
        )
    }
}

fn argmin_by_id(items: impl Iterator<Item = (usize, f64)>) -> usize {
    items
        .fold(None::<(usize, f64)>, |best, (id, v)| match best {
            Some((bid, bv)) if bv < v || (bv == v && bid < id) => Some((bid, bv)),
            _ => Some((id, v)),
        })
        .map(|(id, _)| id)
        .expect("non-empty family")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionBounds {
    pub bounds: Vec<(usize, f64)>,
    pub selected_id: usize,
}

/// Per-model bound `s²/(2(1−c)) − ln(Z_i δ/L)/n`, and the argmin.
pub fn model_selection_bounds(
    family: &ModelFamily,
    delta: f64,
    params: &SubGammaParams,
) -> Result<SelectionBounds> {
    let n = family.n();
    let l = family.len() as f64;
    let bounds = family
        .entries()
        .iter()
        .map(|e| {
            subgamma_evidence_bound(
                e.evidence.neg_log_evidence,
                n,
                delta / l,
                params.s2,
                params.c,
            )
            .map(|b| (e.id, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let selected_id = argmin_by_id(bounds.iter().copied());
    Ok(SelectionBounds {
        bounds,
        selected_id,
    })
}

/// `ln Σ_i Z_i` by log-sum-exp over `−ln Z_i`.
pub fn log_sum_evidence(family: &ModelFamily) -> f64 {
    let logs: Vec<f64> = family
        .entries()
        .iter()
        .map(|e| -e.evidence.neg_log_evidence)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `s²/(2(1−c)) − ln((δ/L) Σ_i Z_i)/n`.
pub fn hierarchical_bound(
    family: &ModelFamily,
    delta: f64,
    params: &SubGammaParams,
) -> Result<f64> {
    let l = family.len() as f64;
    let neg_log_mixture = -(log_sum_evidence(family) - l.ln());
    subgamma_evidence_bound(neg_log_mixture, family.n(), delta, params.s2, params.c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBoundRow {
    pub id: usize,
    pub degree: usize,
    pub neg_log_evidence: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub models: Vec<ModelBoundRow>,
    pub selected_id: usize,
    pub hierarchical_bound: f64,
    /// Best selection bound minus the hierarchical bound.
    pub gap: f64,
    pub delta: f64,
    pub s2: f64,
    pub c: f64,
    /// Largest model dimension; `(s², c)` are expected to be valid for it.
    pub params_dim: usize,
    /// `KL(ρ‖π) = ln L + KL(ρ_{η*}‖π_{η*})` for the deterministic hyperposterior.
    pub kl_hierarchical: f64,
    /// `n E L̂ + KL(ρ‖π)` for the deterministic hyperposterior.
    pub tradeoff_hierarchical: f64,
    /// `−ln(Z_{η*}/L)`.
    pub neg_log_evidence_over_l: f64,
}

impl SelectionReport {
    pub fn kl_identity_residual(&self) -> f64 {
        (self.tradeoff_hierarchical - self.neg_log_evidence_over_l).abs()
    }
}

pub fn selection_vs_averaging_report(
    family: &ModelFamily,
    delta: f64,
    params: &SubGammaParams,
) -> Result<SelectionReport> {
    let sel = model_selection_bounds(family, delta, params)?;
    let hier = hierarchical_bound(family, delta, params)?;
    let models: Vec<ModelBoundRow> = family
        .entries()
        .iter()
        .zip(&sel.bounds)
        .map(|(e, &(_, bound))| ModelBoundRow {
            id: e.id,
            degree: e.degree,
            neg_log_evidence: e.evidence.neg_log_evidence,
            bound,
        })
        .collect();
    let best = models
        .iter()
        .find(|m| m.id == sel.selected_id)
        .map(|m| m.bound)
        .expect("selected id is in the family");
    let chosen = family
        .entries()
        .iter()
        .find(|e| e.id == sel.selected_id)
        .expect("selected id is in the family");
    let ln_l = (family.len() as f64).ln();
    let kl_hierarchical = ln_l + chosen.evidence.kl;
    Ok(SelectionReport {
        models,
        selected_id: sel.selected_id,
        hierarchical_bound: hier,
        gap: best - hier,
        delta,
        s2: params.s2,
        c: params.c,
        params_dim: family.max_dim(),
        kl_hierarchical,
        tradeoff_hierarchical: chosen.evidence.gibbs_emp_risk_total + kl_hierarchical,
        neg_log_evidence_over_l: chosen.evidence.neg_log_evidence + ln_l,
    })
}
