//! Sub-gamma parameters `(s², c)` of the squared and NLL losses for linear
//! predictors drawn from an isotropic Gaussian prior, on data generated by
//! `x ~ N(0, σx² I)`, `y = w*·x + ε`.
//!
//! The variance factor depends on `‖w*‖`, which is only known for synthetic
//! tasks. Callers must supply it explicitly.
//!
//! [`empirical_mgf_check`] estimates the log moment generating function of
//! `V = L_D(w) − ℓ(w, x, y)` by simulation and compares it to the envelope
//! `λ²s²/(2(1 − cλ))`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, PblError, Result};
use crate::losses::LossSpec;
use crate::rng::{derive_seed, std_normal, stream_rng};
use crate::tasks::{dot, LinearTaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubGammaParams {
    pub s2: f64,
    pub c: f64,
    /// The `λ` the variance factor was instantiated at.
    pub lambda_used: f64,
}

impl SubGammaParams {
    /// `λ²s²/(2(1 − cλ))`.
    pub fn envelope(&self, lambda: f64) -> f64 {
        lambda * lambda * self.s2 / (2.0 * (1.0 - self.c * lambda))
    }

    /// Additive slack `s²/(2(1 − c))` of the sub-gamma bound.
    pub fn gap(&self) -> f64 {
        self.s2 / (2.0 * (1.0 - self.c))
    }
}

/// Generative setting the closed-form parameters are derived for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSetting {
    pub input_var: f64,
    pub prior_var: f64,
    pub d: usize,
    pub w_star_sq_norm: f64,
    pub noise_var: f64,
}

impl GaussianSetting {
    pub fn from_task(task: &LinearTaskSpec, prior_var: f64) -> Self {
        GaussianSetting {
            input_var: task.input_var,
            prior_var,
            d: task.d(),
            w_star_sq_norm: task.w_star_sq_norm(),
            noise_var: task.noise_var,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.d >= 1, || "dimension must be at least 1".into())?;
        for (name, v) in [
            ("input variance", self.input_var),
            ("prior variance", self.prior_var),
            ("noise variance", self.noise_var),
        ] {
            ensure(v > 0.0 && v.is_finite(), || {
                format!("{name} {v} must be positive")
            })?;
        }
        ensure(
            self.w_star_sq_norm >= 0.0 && self.w_star_sq_norm.is_finite(),
            || "‖w*‖² must be finite and >= 0".into(),
        )
    }

    /// `σx²(σπ² d + ‖w*‖²)`.
    fn signal_term(&self) -> f64 {
        self.input_var * (self.prior_var * self.d as f64 + self.w_star_sq_norm)
    }
}

fn check_lambda(lambda: f64, c: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda * c < 1.0) {
        return Err(PblError::LambdaOutOfRange { lambda, c });
    }
    Ok(())
}

/// Squared loss: `c = 2σx²σπ²`,
/// `s² = (2/λ)[σx²(σπ²d + ‖w*‖²) + σε²(1 − λc)]`.
pub fn squared_loss_subgamma_params(
    setting: &GaussianSetting,
    lambda: f64,
) -> Result<SubGammaParams> {
    setting.validate()?;
    let c = 2.0 * setting.input_var * setting.prior_var;
    check_lambda(lambda, c)?;
    let s2 = 2.0 / lambda * (setting.signal_term() + setting.noise_var * (1.0 - lambda * c));
    Ok(SubGammaParams {
        s2,
        c,
        lambda_used: lambda,
    })
}

/// NLL loss with noise variance `σ²`: `c = σx²σπ²/σ²`,
/// `s² = [σx²(σπ²d + ‖w*‖²) + σε²(1 − λc)]/(λσ²)`.
pub fn nll_subgamma_params(
    sigma2: f64,
    setting: &GaussianSetting,
    lambda: f64,
) -> Result<SubGammaParams> {
    setting.validate()?;
    ensure(sigma2 > 0.0 && sigma2.is_finite(), || {
        format!("σ² = {sigma2} must be positive")
    })?;
    let c = setting.input_var * setting.prior_var / sigma2;
    check_lambda(lambda, c)?;
    let s2 = (setting.signal_term() + setting.noise_var * (1.0 - lambda * c)) / (lambda * sigma2);
    Ok(SubGammaParams {
        s2,
        c,
        lambda_used: lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub lambda: f64,
    pub psi_hat: f64,
    pub envelope: f64,
    /// Bootstrap standard deviation of `psi_hat`.
    pub band: f64,
}

impl MgfPoint {
    /// `psi_hat ≤ envelope + k·band`.
    pub fn dominated(&self, k: f64) -> bool {
        self.psi_hat <= self.envelope + k * self.band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfReport {
    pub points: Vec<MgfPoint>,
    pub params: SubGammaParams,
    pub samples: usize,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl MgfReport {
    pub fn all_dominated(&self, k: f64) -> bool {
        self.points.iter().all(|p| p.dominated(k))
    }

    /// CSV with columns `lambda,psi_hat,envelope,band`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        out.write_record(["lambda", "psi_hat", "envelope", "band"])?;
        for p in &self.points {
            out.write_record([
                p.lambda.to_string(),
                p.psi_hat.to_string(),
                p.envelope.to_string(),
                p.band.to_string(),
            ])?;
        }
        out.flush().map_err(|e| PblError::io("<csv>", e))?;
        Ok(())
    }
}

pub const MGF_BOOTSTRAP_REPS: usize = 200;
pub const MGF_MIN_SAMPLES: usize = 10_000;

/// Draws `m` realizations of `V = L_D(w) − ℓ(w, x, y)` with `w` from the
/// prior and `(x, y)` from the task.
pub fn sample_deviation<R: Rng + ?Sized>(
    task: &LinearTaskSpec,
    prior_var: f64,
    loss: &LossSpec,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let scale = match loss {
        LossSpec::Squared => 1.0,
        // the additive constant of the NLL cancels in V
        LossSpec::Nll { sigma2 } => 1.0 / (2.0 * sigma2),
        LossSpec::Cropped { .. } => {
            return Err(PblError::InvalidParameter(
                "MGF check supports the squared and NLL losses only".into(),
            ))
        }
    };
    let d = task.d();
    let sw = prior_var.sqrt();
    let sx = task.input_var.sqrt();
    let se = task.noise_var.sqrt();
    let mut w = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        for wj in w.iter_mut() {
            *wj = sw * std_normal(rng);
        }
        for xj in x.iter_mut() {
            *xj = sx * std_normal(rng);
        }
        let eps = std_normal(rng);
        let y = dot(&task.w_star, &x) + se * eps;
        let r = y - dot(&w, &x);
        out.push(scale * (task.squared_risk(&w) - r * r));
    }
    Ok(out)
}

/// `u ≥ t_j` for a uniform `u32` happens with probability `P(Poisson(1) > j)`.
fn poisson_one_thresholds() -> [u32; 16] {
    let scale = 2f64.powi(32);
    let mut cdf = 0.0;
    let mut pmf = (-1f64).exp();
    let mut out = [0u32; 16];
    for (j, t) in out.iter_mut().enumerate() {
        cdf += pmf;
        pmf /= (j + 1) as f64;
        *t = (cdf * scale).min(u32::MAX as f64) as u32;
    }
    out
}

/// `ln((1/m) Σ e^{λ v_i})` via log-sum-exp.
fn log_mean_exp(values: impl Iterator<Item = f64> + Clone, lambda: f64) -> f64 {
    let max = values
        .clone()
        .fold(f64::NEG_INFINITY, |a, v| a.max(lambda * v));
    let mut count = 0usize;
    let sum: f64 = values
        .map(|v| {
            count += 1;
            (lambda * v - max).exp()
        })
        .sum();
    max + (sum / count as f64).ln()
}

pub fn empirical_mgf_check(
    task: &LinearTaskSpec,
    prior_var: f64,
    loss: &LossSpec,
    params: &SubGammaParams,
    lambda_grid: &[f64],
    m: usize,
    seed: u64,
) -> Result<MgfReport> {
    task.validate()?;
    loss.validate()?;
    ensure(prior_var > 0.0 && prior_var.is_finite(), || {
        format!("prior variance {prior_var} must be positive")
    })?;
    ensure(m >= MGF_MIN_SAMPLES, || {
        format!("MGF check needs at least {MGF_MIN_SAMPLES} samples, got {m}")
    })?;
    for &lambda in lambda_grid {
        check_lambda(lambda, params.c)?;
    }
    let mut rng = stream_rng(seed, 0);
    let values = sample_deviation(task, prior_var, loss, m, &mut rng)?;

    // Poisson bootstrap: each sample gets an iid Poisson(1) weight, so a
    // replicate is one sequential pass. One weight draw serves every grid
    // point.
    let k = lambda_grid.len();
    let mut psi_hat = Vec::with_capacity(k);
    let mut shifts = Vec::with_capacity(k);
    for &lambda in lambda_grid {
        let psi = log_mean_exp(values.iter().copied(), lambda);
        if !psi.is_finite() {
            return Err(PblError::NonFinite("MGF estimate"));
        }
        psi_hat.push(psi);
        shifts.push(
            values
                .iter()
                .fold(f64::NEG_INFINITY, |a, &v| a.max(lambda * v)),
        );
    }
    let mut scaled = Vec::with_capacity(m * k);
    for v in &values {
        for (&lambda, &shift) in lambda_grid.iter().zip(&shifts) {
            scaled.push((lambda * v - shift).exp());
        }
    }
    let thresholds = poisson_one_thresholds();
    let mut boot_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut boots = vec![Vec::with_capacity(MGF_BOOTSTRAP_REPS); k];
    let mut sums = vec![0.0; k];
    for _ in 0..MGF_BOOTSTRAP_REPS {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let mut total = 0u64;
        for row in scaled.chunks_exact(k) {
            let u = boot_rng.next_u32();
            let count: u32 = thresholds.iter().map(|&t| u32::from(u >= t)).sum();
            total += u64::from(count);
            let w = f64::from(count);
            for (s, v) in sums.iter_mut().zip(row) {
                *s += w * v;
            }
        }
        for j in 0..k {
            boots[j].push(shifts[j] + (sums[j] / total as f64).ln());
        }
    }

    let mut points = Vec::with_capacity(k);
    for (j, &lambda) in lambda_grid.iter().enumerate() {
        let b = &boots[j];
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        let band = (b.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (b.len() as f64 - 1.0))
            .sqrt();
        if !band.is_finite() {
            return Err(PblError::NonFinite("MGF bootstrap band"));
        }
        points.push(MgfPoint {
            lambda,
            psi_hat: psi_hat[j],
            envelope: params.envelope(lambda),
            band,
        });
    }
    Ok(MgfReport {
        points,
        params: *params,
        samples: m,
        bootstrap_reps: MGF_BOOTSTRAP_REPS,
        seed,
    })
}
