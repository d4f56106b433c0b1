use pbl_core::bounds::{
    alquier_bound, alquier_hoeffding_bound, catoni_bound, catoni_evidence_bound,
    hoeffding_psi_bound, subgamma_bound, subgamma_evidence_bound, subgaussian_bound,
};
use pbl_core::selection::{
    hierarchical_bound, model_selection_bounds, selection_vs_averaging_report, ModelEntry,
    ModelFamily,
};
use pbl_core::tasks::{gen_sine_task, SineTaskSpec};
use pbl_core::{evidence_decomposition, DesignMatrix, EvidenceReport, ModelConfig, SubGammaParams};
use proptest::prelude::*;

fn params(s2: f64, c: f64) -> SubGammaParams {
    SubGammaParams {
        s2,
        c,
        lambda_used: 1.0,
    }
}

proptest! {
    #[test]
    fn catoni_is_monotone_and_bounded(
        emp in 1.0f64..4.0, kl in 0.0f64..50.0, dkl in 0.01f64..5.0,
        n in 1usize..10_000, delta in 0.001f64..0.5,
    ) {
        let (a, b) = (1.0, 4.0);
        let base = catoni_bound(emp, kl, n, delta, a, b).unwrap();
        // the supremum over KL is a + (b − a)/(1 − e^{a−b}), slightly above b
        let sup = a + (b - a) / (1.0 - (a - b).exp());
        prop_assert!(base >= emp - 1e-12 && base <= sup + 1e-12);
        prop_assert!(catoni_bound(emp, kl + dkl, n, delta, a, b).unwrap() >= base);
        prop_assert!(catoni_bound(emp, kl, n, delta / 2.0, a, b).unwrap() >= base);
        let emp2 = (emp + 0.1).min(b);
        prop_assert!(catoni_bound(emp2, kl, n, delta, a, b).unwrap() >= base);
    }

    #[test]
    fn evidence_forms_agree_with_explicit_forms(
        emp in 1.0f64..4.0, kl in 0.0f64..30.0, n in 1usize..5_000, delta in 0.001f64..0.5,
        s2 in 0.0f64..2.0, c in 0.0f64..0.9,
    ) {
        let nle = n as f64 * emp + kl;
        let lhs = catoni_evidence_bound(nle, n, delta, 1.0, 4.0).unwrap();
        let rhs = catoni_bound(emp, kl, n, delta, 1.0, 4.0).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        let lhs = subgamma_evidence_bound(nle, n, delta, s2, c).unwrap();
        let rhs = subgamma_bound(emp, kl, n, delta, s2, c).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn subgamma_reduces_to_subgaussian_and_grows_with_scale(
        emp in -5.0f64..5.0, kl in 0.0f64..30.0, n in 1usize..5_000, delta in 0.001f64..0.5,
        s2 in 0.0f64..2.0, c in 0.0f64..0.9,
    ) {
        let g = subgaussian_bound(emp, kl, n, delta, s2).unwrap();
        prop_assert_eq!(subgamma_bound(emp, kl, n, delta, s2, 0.0).unwrap(), g);
        prop_assert!(subgamma_bound(emp, kl, n, delta, s2, c).unwrap() >= g);
    }

    #[test]
    fn alquier_hoeffding_is_alquier_with_hoeffding_psi(
        emp in 1.0f64..4.0, kl in 0.0f64..30.0, n in 1usize..5_000, delta in 0.001f64..0.5,
        lambda in 0.1f64..1e4,
    ) {
        let psi = hoeffding_psi_bound(lambda, n, 1.0, 4.0).unwrap();
        let lhs = alquier_hoeffding_bound(emp, kl, n, delta, lambda, 1.0, 4.0).unwrap();
        let rhs = alquier_bound(emp, kl, n, delta, lambda, psi).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn bounds_sit_above_the_empirical_risk(
        emp in 1.0f64..4.0, kl in 0.0f64..30.0, n in 1usize..5_000, delta in 0.001f64..0.99,
    ) {
        prop_assert!(subgamma_bound(emp, kl, n, delta, 0.3, 0.01).unwrap() > emp);
        prop_assert!(alquier_hoeffding_bound(emp, kl, n, delta, (n as f64).sqrt(), 1.0, 4.0).unwrap() > emp);
    }

    /// Shifting every evidence by the same amount or changing (s², c) keeps
    /// the selected model; the hierarchical bound never exceeds any
    /// per-model bound.
    #[test]
    fn selection_invariants(
        nles in prop::collection::vec(0.0f64..200.0, 1..10),
        shift in -50.0f64..50.0, s2 in 0.0f64..2.0, c in 0.0f64..0.9, delta in 0.001f64..0.5,
    ) {
        let family = family_from(&nles, 30);
        let shifted: Vec<f64> = nles.iter().map(|v| v + shift + 60.0).collect();
        let sel = model_selection_bounds(&family, delta, &params(s2, c)).unwrap();
        prop_assert_eq!(sel.selected_id, family.max_evidence_id());
        let other = model_selection_bounds(&family_from(&shifted, 30), delta / 3.0, &params(0.1, 0.0)).unwrap();
        prop_assert_eq!(other.selected_id, sel.selected_id);
        let hier = hierarchical_bound(&family, delta, &params(s2, c)).unwrap();
        for &(_, b) in &sel.bounds {
            prop_assert!(hier <= b + 1e-12);
        }
        let rep = selection_vs_averaging_report(&family, delta, &params(s2, c)).unwrap();
        prop_assert!(rep.gap >= -1e-12);
        prop_assert!(rep.gap <= (nles.len() as f64).ln() / 30.0 + 1e-12);
        prop_assert!(rep.kl_identity_residual() < 1e-9);
    }
}

fn family_from(nles: &[f64], n: usize) -> ModelFamily {
    ModelFamily::new(
        nles.iter()
            .enumerate()
            .map(|(i, &v)| ModelEntry {
                id: i,
                degree: i,
                evidence: EvidenceReport {
                    neg_log_evidence: v,
                    gibbs_emp_risk_total: v / 2.0,
                    kl: v / 2.0,
                    n,
                    d: i + 1,
                    sigma2: 1.0,
                    sigma_pi2: 1.0,
                },
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn equalized_evidences_gap_is_log_l_over_n() {
    for l in [2usize, 5, 7] {
        let family = family_from(&vec![42.0; l], 15);
        let rep = selection_vs_averaging_report(&family, 0.05, &params(0.28, 0.005)).unwrap();
        assert!((rep.gap - (l as f64).ln() / 15.0).abs() < 1e-14);
        assert_eq!(rep.selected_id, 0);
    }
}

#[test]
fn sine_family_selection_matches_evidence() {
    let cfg = ModelConfig::new(0.5, 200.0).unwrap();
    for seed in 0..20 {
        let data = gen_sine_task(&SineTaskSpec {
            n: 15,
            noise_var: 0.25,
            lo: 0.0,
            hi: 2.0 * std::f64::consts::PI,
            seed,
        })
        .unwrap();
        let entries: Vec<ModelEntry> = (1..=7)
            .map(|d| ModelEntry {
                id: d,
                degree: d,
                evidence: evidence_decomposition(
                    &DesignMatrix::polynomial(&data, d).unwrap(),
                    &cfg,
                )
                .unwrap(),
            })
            .collect();
        let family = ModelFamily::new(entries).unwrap();
        let rep = selection_vs_averaging_report(&family, 0.05, &params(0.5, 0.01)).unwrap();
        assert_eq!(rep.selected_id, family.max_evidence_id());
        assert!(rep.models.iter().all(|m| rep.hierarchical_bound <= m.bound));
    }
}

#[test]
fn bound_domain_errors() {
    assert!(catoni_bound(0.5, 1.0, 10, 0.05, 1.0, 4.0).is_err());
    assert!(catoni_bound(2.0, 1.0, 0, 0.05, 1.0, 4.0).is_err());
    assert!(subgamma_bound(1.0, 1.0, 10, 0.05, 0.3, 1.0).is_err());
    assert!(subgamma_bound(1.0, -1.0, 10, 0.05, 0.3, 0.1).is_err());
    assert!(subgaussian_bound(1.0, 1.0, 10, 0.0, 0.3).is_err());
    assert!(hoeffding_psi_bound(0.0, 10, 1.0, 4.0).is_err());
}
