use pbl_core::rng::stream_rng;
use pbl_core::subgamma::{
    empirical_mgf_check, nll_subgamma_params, sample_deviation, squared_loss_subgamma_params,
};
use pbl_core::tasks::LinearTaskSpec;
use pbl_core::{GaussianSetting, LossSpec};
use proptest::prelude::*;

fn task(d: usize, w_sq: f64, input_var: f64, noise_var: f64, seed: u64) -> LinearTaskSpec {
    LinearTaskSpec {
        w_star: LinearTaskSpec::isotropic_target(d, w_sq.sqrt()),
        input_var,
        noise_var,
        seed,
    }
}

proptest! {
    /// NLL parameters are the squared-loss ones at `λ/(2σ²)`, rescaled.
    #[test]
    fn nll_params_are_rescaled_squared_params(
        d in 1usize..30, input_var in 0.1f64..3.0, prior_var in 0.001f64..0.1,
        w_sq in 0.0f64..2.0, noise_var in 0.01f64..1.0, sigma2 in 0.5f64..5.0, lambda in 0.05f64..2.0,
    ) {
        let s = GaussianSetting { input_var, prior_var, d, w_star_sq_norm: w_sq, noise_var };
        let nll = nll_subgamma_params(sigma2, &s, lambda).unwrap();
        let mu = lambda / (2.0 * sigma2);
        let sq = squared_loss_subgamma_params(&s, mu).unwrap();
        prop_assert!((nll.c - sq.c / (2.0 * sigma2)).abs() <= 1e-15 * sq.c);
        let expected = sq.s2 / (4.0 * sigma2 * sigma2);
        prop_assert!((nll.s2 - expected).abs() <= 1e-12 * expected);
        prop_assert!((nll.envelope(lambda) - sq.envelope(mu)).abs() <= 1e-12 * sq.envelope(mu));
    }

    /// The empirical log-MGF of the squared loss stays under the envelope
    /// with parameters taken at the same `λ`.
    #[test]
    fn envelope_dominates_empirical_mgf(
        d in 1usize..4, input_var in 0.5f64..1.5, prior_var in 0.01f64..0.1,
        w_sq in 0.0f64..0.5, noise_var in 0.05f64..0.5, seed in any::<u64>(),
    ) {
        let t = task(d, w_sq, input_var, noise_var, seed);
        let setting = GaussianSetting::from_task(&t, prior_var);
        let grid = [0.25, 0.5, 1.0];
        let p_max = squared_loss_subgamma_params(&setting, 1.0).unwrap();
        let rep = empirical_mgf_check(&t, prior_var, &LossSpec::Squared, &p_max, &grid, 20_000, seed).unwrap();
        for pt in &rep.points {
            let p = squared_loss_subgamma_params(&setting, pt.lambda).unwrap();
            prop_assert!(pt.psi_hat <= p.envelope(pt.lambda) + 3.0 * pt.band, "{pt:?} vs {}", p.envelope(pt.lambda));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The NLL deviation is the squared deviation divided by `2σ²`, so its
    /// log-MGF at `λ` equals the squared one at `λ/(2σ²)`.
    #[test]
    fn nll_mgf_is_rescaled_squared_mgf(seed in any::<u64>(), sigma2 in 0.5f64..4.0) {
        let t = task(2, 0.1, 1.0, 0.1, seed);
        let setting = GaussianSetting::from_task(&t, 0.05);
        let sq_p = squared_loss_subgamma_params(&setting, 0.5).unwrap();
        let nll_p = nll_subgamma_params(sigma2, &setting, 0.5 * 2.0 * sigma2).unwrap();
        let sq = empirical_mgf_check(&t, 0.05, &LossSpec::Squared, &sq_p, &[0.5], 10_000, seed).unwrap();
        let nll = empirical_mgf_check(&t, 0.05, &LossSpec::nll(sigma2).unwrap(), &nll_p, &[0.5 * 2.0 * sigma2], 10_000, seed).unwrap();
        let (a, b) = (sq.points[0].psi_hat, nll.points[0].psi_hat);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12), "{a} vs {b}");
    }
}

/// As `λ → 0`, `ψ̂(λ) = λ v̄ + λ² s_v²/2 + O(λ³)`.
#[test]
fn small_lambda_expansion() {
    let t = task(2, 0.1, 1.0, 0.1, 3);
    let setting = GaussianSetting::from_task(&t, 0.05);
    let p = squared_loss_subgamma_params(&setting, 1.0).unwrap();
    let m = 50_000;
    let values = sample_deviation(&t, 0.05, &LossSpec::Squared, m, &mut stream_rng(3, 0)).unwrap();
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
    for lambda in [1e-2, 1e-3] {
        let rep = empirical_mgf_check(&t, 0.05, &LossSpec::Squared, &p, &[lambda], m, 3).unwrap();
        let second = rep.points[0].psi_hat - lambda * mean;
        let expected = 0.5 * lambda * lambda * var;
        assert!(
            (second - expected).abs() < 0.05 * expected,
            "λ={lambda}: {second} vs {expected}"
        );
    }
}

#[test]
fn deviation_has_zero_mean() {
    let t = task(3, 0.25, 1.0, 0.2, 11);
    let m = 200_000;
    let values = sample_deviation(&t, 0.02, &LossSpec::Squared, m, &mut stream_rng(11, 0)).unwrap();
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64).sqrt();
    assert!(mean.abs() < 4.0 * sd / (m as f64).sqrt(), "mean {mean}");
}

#[test]
fn mgf_report_is_reproducible() {
    let t = task(2, 0.1, 1.0, 0.1, 5);
    let p = squared_loss_subgamma_params(&GaussianSetting::from_task(&t, 0.05), 1.0).unwrap();
    let a = empirical_mgf_check(&t, 0.05, &LossSpec::Squared, &p, &[0.5, 1.0], 10_000, 5).unwrap();
    let b = empirical_mgf_check(&t, 0.05, &LossSpec::Squared, &p, &[0.5, 1.0], 10_000, 5).unwrap();
    assert_eq!(a, b);
    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("lambda,psi_hat,envelope,band\n"));
    assert_eq!(text.lines().count(), 3);
}
