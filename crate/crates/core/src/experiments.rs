//! Drivers for the sine-regression and linear-regression experiments and the
//! validation run. Each driver returns plain rows; the `write_*` functions
//! emit them as CSV/JSON files preceded by `#` metadata lines.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::blr::{evidence_decomposition_with, fit_posterior, EvidenceReport, ModelConfig};
use crate::bounds::{alquier_hoeffding_bound, catoni_bound, subgamma_bound};
use crate::error::{ensure, PblError, Result};
use crate::losses::{empirical_gibbs_risk_mc, LossSpec, McEstimate};
use crate::oracle::{
    gibbs_generalization_risk, run_validity_study, CoverageReport, StudyFamily, ValidityStudyConfig,
};
use crate::rng::{derive_seed, stream_rng};
use crate::selection::{selection_vs_averaging_report, ModelEntry, ModelFamily, SelectionReport};
use crate::subgamma::{
    empirical_mgf_check, nll_subgamma_params, squared_loss_subgamma_params, GaussianSetting,
    MgfReport, SubGammaParams,
};
use crate::tasks::{
    gen_linear_design, gen_sine_task, polynomial_features, sample_sine, Dataset, DesignMatrix,
    LinearTaskSpec, SineTaskSpec,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed shipped as the default of the sine experiments.
pub const DEFAULT_SINE_SEED: u64 = 868;
pub const DEFAULT_LINEAR_SEED: u64 = 2019;
pub const DEFAULT_VALIDATE_SEED: u64 = 7;

/// Relative tolerance of the inline evidence identity check.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Ordered `key: value` pairs written as `# key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Metadata::default();
        m.push("tool", format!("pbl {TOOL_VERSION}"));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PblError::io(path, e))
}

fn write_csv_file(
    path: &Path,
    meta: &Metadata,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = create(path)?;
    meta.write(&mut out).map_err(|e| PblError::io(path, e))?;
    {
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        csv.write_record(header)?;
        for row in rows {
            csv.write_record(&row)?;
        }
        csv.flush().map_err(|e| PblError::io(path, e))?;
    }
    out.flush().map_err(|e| PblError::io(path, e))
}

/// JSON files carry the metadata under a `meta` key.
fn write_json_file<T: Serialize>(path: &Path, meta: &Metadata, body: &T) -> Result<()> {
    let meta_obj: serde_json::Map<String, serde_json::Value> = meta
        .entries()
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect();
    let doc = serde_json::json!({ "meta": meta_obj, "report": body });
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out).map_err(|e| PblError::io(path, e))?;
    out.flush().map_err(|e| PblError::io(path, e))
}

fn identity_ok(rep: &EvidenceReport) -> bool {
    rep.identity_residual() <= IDENTITY_TOL * rep.neg_log_evidence.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// sine regression

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SineConfig {
    pub seed: u64,
    pub n: usize,
    pub noise_var: f64,
    pub model: ModelConfig,
    pub degrees: Vec<usize>,
    /// Points of the prediction grid over `[0, 2π]`.
    pub grid_size: usize,
    pub test_size: usize,
    pub delta: f64,
    /// `(s², c)` used for the selection bounds. The argmin and the gap do not
    /// depend on them.
    pub selection_params: SubGammaParams,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            seed: DEFAULT_SINE_SEED,
            n: 15,
            noise_var: 0.25,
            model: ModelConfig {
                noise_var: 0.5,
                prior_var: 200.0,
            },
            degrees: (1..=7).collect(),
            grid_size: 200,
            test_size: 1000,
            delta: 0.05,
            selection_params: SubGammaParams {
                s2: 0.0,
                c: 0.0,
                lambda_used: 1.0,
            },
        }
    }
}

impl SineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task().validate()?;
        ensure(!self.degrees.is_empty(), || "no degrees given".into())?;
        ensure(self.degrees.iter().all(|&d| d >= 1), || {
            "degree 0 is not allowed; degrees start at 1".into()
        })?;
        ensure(self.grid_size >= 2, || {
            "grid needs at least 2 points".into()
        })?;
        ensure(self.test_size >= 1, || {
            "test sample must be non-empty".into()
        })?;
        ensure(self.delta > 0.0 && self.delta < 1.0, || {
            format!("delta {} must lie in (0, 1)", self.delta)
        })
    }

    pub fn task(&self) -> SineTaskSpec {
        SineTaskSpec {
            n: self.n,
            noise_var: self.noise_var,
            lo: 0.0,
            hi: 2.0 * std::f64::consts::PI,
            seed: self.seed,
        }
    }

    pub fn metadata(&self, command: &str) -> Metadata {
        let mut m = Metadata::new(command);
        m.push("seed", self.seed)
            .push("n", self.n)
            .push("noise_var", self.noise_var)
            .push("sigma2", self.model.noise_var)
            .push("sigma_pi2", self.model.prior_var)
            .push("degrees", join(&self.degrees))
            .push("grid_size", self.grid_size)
            .push("test_size", self.test_size)
            .push("delta", self.delta)
            .push("selection_s2", self.selection_params.s2)
            .push("selection_c", self.selection_params.c);
        m
    }

    fn grid(&self) -> Vec<f64> {
        let hi = 2.0 * std::f64::consts::PI;
        let k = self.grid_size - 1;
        (0..self.grid_size)
            .map(|i| hi * i as f64 / k as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigA {
    pub train: Dataset,
    /// `(degree, x, mean_prediction)`.
    pub rows: Vec<(usize, f64, f64)>,
}

pub fn fig_a(cfg: &SineConfig) -> Result<FigA> {
    cfg.validate()?;
    let train = gen_sine_task(&cfg.task())?;
    let grid = cfg.grid();
    let mut rows = Vec::with_capacity(cfg.degrees.len() * grid.len());
    for &degree in &cfg.degrees {
        let design = DesignMatrix::polynomial(&train, degree)?;
        let post = fit_posterior(&design, &cfg.model)?;
        for &x in &grid {
            rows.push((
                degree,
                x,
                post.predict_mean(&polynomial_features(x, degree)),
            ));
        }
    }
    Ok(FigA { train, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigBRow {
    pub degree: usize,
    pub neg_log_evidence: f64,
    pub gibbs_emp_risk_total: f64,
    pub kl: f64,
    /// Gibbs NLL risk averaged over the fresh test sample.
    pub test_risk: f64,
    pub identity_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigB {
    pub rows: Vec<FigBRow>,
    pub selection: SelectionReport,
}

impl FigB {
    pub fn argmin_degree(&self) -> usize {
        self.rows
            .iter()
            .find(|r| r.degree == self.selection.selected_id)
            .map(|r| r.degree)
            .expect("selected model is a row")
    }

    /// Messages for every inline check that failed.
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .filter(|r| !r.identity_ok)
            .map(|r| format!("evidence identity fails for degree {}", r.degree))
            .collect();
        if self.selection.kl_identity_residual()
            > IDENTITY_TOL * self.selection.neg_log_evidence_over_l.abs().max(1.0)
        {
            out.push("hierarchical KL identity fails".into());
        }
        if self.selection.gap < 0.0 {
            out.push(format!("negative selection gap {}", self.selection.gap));
        }
        out
    }
}

/// Evidence decomposition per degree, test risk on `test_size` fresh points
/// and the selection report. Model ids are the degrees.
pub fn fig_b(cfg: &SineConfig) -> Result<FigB> {
    cfg.validate()?;
    let spec = cfg.task();
    let train = gen_sine_task(&spec)?;
    let mut test_rng = stream_rng(cfg.seed, 1);
    let test = sample_sine(&spec, cfg.test_size, &mut test_rng);
    let nll_const = cfg.model.nll_constant();
    let two_s2 = 2.0 * cfg.model.noise_var;

    let mut rows = Vec::with_capacity(cfg.degrees.len());
    let mut entries = Vec::with_capacity(cfg.degrees.len());
    for &degree in &cfg.degrees {
        let design = DesignMatrix::polynomial(&train, degree)?;
        let post = fit_posterior(&design, &cfg.model)?;
        let rep = evidence_decomposition_with(&post, &design, &cfg.model)?;
        let test_total: f64 = test
            .inputs()
            .iter()
            .zip(test.labels())
            .map(|(x, y)| {
                let phi = polynomial_features(x[0], degree);
                let r = y - post.predict_mean(&phi);
                nll_const + (r * r + post.predict_var(&phi)) / two_s2
            })
            .sum();
        rows.push(FigBRow {
            degree,
            neg_log_evidence: rep.neg_log_evidence,
            gibbs_emp_risk_total: rep.gibbs_emp_risk_total,
            kl: rep.kl,
            test_risk: test_total / test.len() as f64,
            identity_ok: identity_ok(&rep),
        });
        entries.push(ModelEntry {
            id: degree,
            degree,
            evidence: rep,
        });
    }
    let family = ModelFamily::new(entries)?;
    let selection = selection_vs_averaging_report(&family, cfg.delta, &cfg.selection_params)?;
    Ok(FigB { rows, selection })
}

/// Degree selected by the evidence for each of `k` consecutive seeds
/// starting at `cfg.seed`.
pub fn selection_distribution(cfg: &SineConfig, k: usize) -> Result<Vec<(u64, usize)>> {
    (0..k as u64)
        .map(|i| {
            let c = SineConfig {
                seed: cfg.seed.wrapping_add(i),
                ..cfg.clone()
            };
            fig_b(&c).map(|f| (c.seed, f.argmin_degree()))
        })
        .collect()
}

pub fn write_fig_a(dir: &Path, cfg: &SineConfig) -> Result<Vec<PathBuf>> {
    let fig = fig_a(cfg)?;
    let meta = cfg.metadata("fig-a");
    let train_path = dir.join("train.csv");
    let mut out = create(&train_path)?;
    meta.write(&mut out)
        .map_err(|e| PblError::io(&train_path, e))?;
    fig.train.write_csv(&mut out)?;
    out.flush().map_err(|e| PblError::io(&train_path, e))?;

    let path = dir.join("fig_a.csv");
    write_csv_file(
        &path,
        &meta,
        &["degree", "x", "mean_prediction"],
        fig.rows
            .iter()
            .map(|(d, x, p)| vec![d.to_string(), x.to_string(), p.to_string()]),
    )?;
    Ok(vec![path, train_path])
}

/// Writes `fig_b.csv` and `selection.json`; returns the figure so callers can
/// act on [`FigB::invariant_failures`].
pub fn write_fig_b(dir: &Path, cfg: &SineConfig) -> Result<(FigB, Vec<PathBuf>)> {
    let fig = fig_b(cfg)?;
    let mut meta = cfg.metadata("fig-b");
    meta.push("selected_degree", fig.argmin_degree());
    let path = dir.join("fig_b.csv");
    write_csv_file(
        &path,
        &meta,
        &[
            "degree",
            "neg_log_evidence",
            "gibbs_emp_risk_total",
            "kl",
            "test_risk",
        ],
        fig.rows.iter().map(|r| {
            vec![
                r.degree.to_string(),
                r.neg_log_evidence.to_string(),
                r.gibbs_emp_risk_total.to_string(),
                r.kl.to_string(),
                r.test_risk.to_string(),
            ]
        }),
    )?;
    let sel_path = dir.join("selection.json");
    write_json_file(&sel_path, &meta, &fig.selection)?;
    Ok((fig, vec![path, sel_path]))
}

pub fn write_selection_distribution(
    dir: &Path,
    cfg: &SineConfig,
    k: usize,
) -> Result<(Vec<(u64, usize)>, PathBuf)> {
    ensure(k >= 1, || "need at least one seed".into())?;
    let picks = selection_distribution(cfg, k)?;
    let mut meta = cfg.metadata("fig-b --seeds");
    meta.push("seeds", k);
    for &degree in &cfg.degrees {
        let count = picks.iter().filter(|p| p.1 == degree).count();
        meta.push(&format!("selected_degree_{degree}"), count);
    }
    let path = dir.join("fig_b_seeds.csv");
    write_csv_file(
        &path,
        &meta,
        &["seed", "selected_degree"],
        picks
            .iter()
            .map(|(s, d)| vec![s.to_string(), d.to_string()]),
    )?;
    Ok((picks, path))
}

// ---------------------------------------------------------------------------
// linear regression bound comparison

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConfig {
    pub seed: u64,
    pub d: usize,
    pub w_star_norm: f64,
    pub input_var: f64,
    pub noise_var: f64,
    pub model: ModelConfig,
    pub delta: f64,
    pub crop: (f64, f64),
    pub n_grid: Vec<usize>,
    /// Posterior samples of the cropped empirical risk.
    pub mc_weights: usize,
    /// Posterior samples of the generalization oracle.
    pub mc_gen: usize,
    /// Cap on `m·n·d` for the cropped empirical risk; `m` never drops below
    /// [`MIN_CROPPED_WEIGHTS`].
    pub work_budget: usize,
}

pub const MIN_CROPPED_WEIGHTS: usize = 100;

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            seed: DEFAULT_LINEAR_SEED,
            d: 20,
            w_star_norm: 0.5,
            input_var: 1.0,
            noise_var: 1.0 / 9.0,
            model: ModelConfig {
                noise_var: 2.0,
                prior_var: 0.01,
            },
            delta: 0.05,
            crop: (1.0, 4.0),
            n_grid: vec![10, 100, 1_000, 10_000, 100_000, 1_000_000],
            mc_weights: 10_000,
            mc_gen: 100_000,
            work_budget: 2_000_000_000,
        }
    }
}

impl LinearConfig {
    pub fn task(&self) -> LinearTaskSpec {
        LinearTaskSpec {
            w_star: LinearTaskSpec::isotropic_target(self.d, self.w_star_norm),
            input_var: self.input_var,
            noise_var: self.noise_var,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task().validate()?;
        LossSpec::cropped(LossSpec::Squared, self.crop.0, self.crop.1)?;
        ensure(!self.n_grid.is_empty(), || "empty n grid".into())?;
        ensure(self.n_grid.iter().all(|&n| n >= 1), || {
            "n must be at least 1".into()
        })?;
        ensure(self.mc_weights >= 2 && self.mc_gen >= 2, || {
            "Monte-Carlo sizes must be at least 2".into()
        })?;
        ensure(self.delta > 0.0 && self.delta < 1.0, || {
            format!("delta {} must lie in (0, 1)", self.delta)
        })
    }

    pub fn subgamma(&self) -> Result<SubGammaParams> {
        nll_subgamma_params(
            self.model.noise_var,
            &GaussianSetting::from_task(&self.task(), self.model.prior_var),
            1.0,
        )
    }

    /// Posterior samples used for the cropped empirical risk at size `n`.
    pub fn cropped_weights(&self, n: usize) -> usize {
        let cap = self.work_budget / (n * self.d).max(1);
        self.mc_weights.min(cap.max(MIN_CROPPED_WEIGHTS))
    }

    pub fn metadata(&self, command: &str) -> Result<Metadata> {
        let p = self.subgamma()?;
        let mut m = Metadata::new(command);
        m.push("seed", self.seed)
            .push("d", self.d)
            .push("w_star_norm", self.w_star_norm)
            .push("input_var", self.input_var)
            .push("noise_var", self.noise_var)
            .push("sigma2", self.model.noise_var)
            .push("sigma_pi2", self.model.prior_var)
            .push("delta", self.delta)
            .push("crop", format!("{},{}", self.crop.0, self.crop.1))
            .push("n_grid", join(&self.n_grid))
            .push("mc_weights", self.mc_weights)
            .push("mc_gen", self.mc_gen)
            .push("work_budget", self.work_budget)
            .push("s2", p.s2)
            .push("c", p.c);
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigCRow {
    pub n: usize,
    pub emp_gibbs_nll: f64,
    pub gen_gibbs_nll: McEstimate,
    pub bound_subgamma: f64,
    pub bound_catoni_cropped: f64,
    pub bound_alquier_sqrtn_cropped: f64,
    pub bound_alquier_n_cropped: f64,
    pub kl: f64,
    pub neg_log_evidence: f64,
    /// MC estimate of the cropped empirical Gibbs risk, before clamping.
    pub emp_cropped: McEstimate,
    pub identity_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigC {
    pub rows: Vec<FigCRow>,
    pub subgamma: SubGammaParams,
}

impl FigC {
    pub fn invariant_failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| !r.identity_ok)
            .map(|r| format!("evidence identity fails at n = {}", r.n))
            .collect()
    }
}

pub fn fig_c_row(cfg: &LinearConfig, idx: usize, params: &SubGammaParams) -> Result<FigCRow> {
    let n = cfg.n_grid[idx];
    let row_seed = derive_seed(cfg.seed, idx as u64);
    let task = cfg.task().with_seed(row_seed);
    let design = gen_linear_design(&task, n)?;
    let post = fit_posterior(&design, &cfg.model)?;
    let rep = evidence_decomposition_with(&post, &design, &cfg.model)?;
    let nll = LossSpec::nll(cfg.model.noise_var)?;
    let (a, b) = cfg.crop;
    let cropped = LossSpec::cropped(nll.clone(), a, b)?;
    let gen =
        gibbs_generalization_risk(&post, &task, &nll, cfg.mc_gen, 0, derive_seed(row_seed, 1))?;
    let emp_cropped = empirical_gibbs_risk_mc(
        &post,
        &design,
        &cropped,
        cfg.cropped_weights(n),
        derive_seed(row_seed, 2),
    )?;
    let emp_c = emp_cropped.estimate.clamp(a, b);
    let nf = n as f64;
    let emp = rep.gibbs_emp_risk_total / nf;
    Ok(FigCRow {
        n,
        emp_gibbs_nll: emp,
        gen_gibbs_nll: gen,
        bound_subgamma: subgamma_bound(emp, rep.kl, n, cfg.delta, params.s2, params.c)?,
        bound_catoni_cropped: catoni_bound(emp_c, rep.kl, n, cfg.delta, a, b)?,
        bound_alquier_sqrtn_cropped: alquier_hoeffding_bound(
            emp_c,
            rep.kl,
            n,
            cfg.delta,
            nf.sqrt(),
            a,
            b,
        )?,
        bound_alquier_n_cropped: alquier_hoeffding_bound(emp_c, rep.kl, n, cfg.delta, nf, a, b)?,
        kl: rep.kl,
        neg_log_evidence: rep.neg_log_evidence,
        emp_cropped,
        identity_ok: identity_ok(&rep),
    })
}

pub fn fig_c(cfg: &LinearConfig) -> Result<FigC> {
    cfg.validate()?;
    let subgamma = cfg.subgamma()?;
    let rows = (0..cfg.n_grid.len())
        .map(|i| fig_c_row(cfg, i, &subgamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(FigC { rows, subgamma })
}

/// Writes `fig_c.csv` and `fig_c.json` (per-row Monte-Carlo details).
pub fn write_fig_c(dir: &Path, cfg: &LinearConfig) -> Result<(FigC, Vec<PathBuf>)> {
    let fig = fig_c(cfg)?;
    let mut meta = cfg.metadata("fig-c")?;
    meta.push(
        "cropped_weights",
        join(
            &cfg.n_grid
                .iter()
                .map(|&n| cfg.cropped_weights(n))
                .collect::<Vec<_>>(),
        ),
    );
    let path = dir.join("fig_c.csv");
    write_csv_file(
        &path,
        &meta,
        &[
            "n",
            "emp_gibbs_nll",
            "gen_gibbs_nll",
            "bound_subgamma",
            "bound_catoni_cropped",
            "bound_alquier_sqrtn_cropped",
            "bound_alquier_n_cropped",
        ],
        fig.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.emp_gibbs_nll.to_string(),
                r.gen_gibbs_nll.estimate.to_string(),
                r.bound_subgamma.to_string(),
                r.bound_catoni_cropped.to_string(),
                r.bound_alquier_sqrtn_cropped.to_string(),
                r.bound_alquier_n_cropped.to_string(),
            ]
        }),
    )?;
    let json_path = dir.join("fig_c.json");
    write_json_file(&json_path, &meta, &fig.rows)?;
    Ok((fig, vec![path, json_path]))
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfSetup {
    pub task: LinearTaskSpec,
    pub prior_var: f64,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    /// Number of bootstrap bands allowed above the envelope.
    pub band_k: f64,
}

impl MgfSetup {
    /// Squared-loss parameters at `λ = max(grid)`. `s²(λ)` decreases in `λ`,
    /// so this is the tightest envelope on the grid: domination here implies
    /// domination with the per-`λ` parameters.
    pub fn params(&self) -> Result<SubGammaParams> {
        let lambda = self
            .lambdas
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        squared_loss_subgamma_params(
            &GaussianSetting::from_task(&self.task, self.prior_var),
            lambda,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateConfig {
    pub study: ValidityStudyConfig,
    pub mgf: MgfSetup,
}

impl ValidateConfig {
    pub fn with_seed(seed: u64) -> Self {
        let task = LinearTaskSpec {
            w_star: LinearTaskSpec::isotropic_target(3, 0.5),
            input_var: 1.0,
            noise_var: 1.0 / 9.0,
            seed,
        };
        let study = ValidityStudyConfig {
            task,
            model: ModelConfig {
                noise_var: 2.0,
                prior_var: 0.01,
            },
            n: 20,
            trials: 500,
            delta: 0.05,
            families: vec![
                StudyFamily::Subgamma,
                StudyFamily::SubgammaEvidence,
                StudyFamily::CatoniCropped,
                StudyFamily::AlquierSqrtNCropped,
                StudyFamily::AlquierNCropped,
            ],
            crop: Some((1.0, 4.0)),
            m_weights: 1_000,
            m_test: 100,
            master_seed: seed,
        };
        let mgf = MgfSetup {
            task: LinearTaskSpec {
                w_star: LinearTaskSpec::isotropic_target(2, 0.1f64.sqrt()),
                input_var: 1.0,
                noise_var: 0.1,
                seed: derive_seed(seed, 1),
            },
            prior_var: 0.05,
            lambdas: vec![0.25, 0.5, 1.0],
            samples: 1_000_000,
            band_k: 3.0,
        };
        ValidateConfig { study, mgf }
    }

    pub fn metadata(&self) -> Metadata {
        let s = &self.study;
        let mut m = Metadata::new("validate");
        m.push("seed", s.master_seed)
            .push("n", s.n)
            .push("d", s.task.d())
            .push("trials", s.trials)
            .push("delta", s.delta)
            .push("sigma2", s.model.noise_var)
            .push("sigma_pi2", s.model.prior_var)
            .push("noise_var", s.task.noise_var)
            .push("w_star_sq_norm", s.task.w_star_sq_norm())
            .push("m_weights", s.m_weights)
            .push("m_test", s.m_test)
            .push("mgf_seed", self.mgf.task.seed)
            .push("mgf_d", self.mgf.task.d())
            .push("mgf_prior_var", self.mgf.prior_var)
            .push("mgf_lambdas", join(&self.mgf.lambdas))
            .push("mgf_samples", self.mgf.samples);
        if let Some((a, b)) = s.crop {
            m.push("crop", format!("{a},{b}"));
        }
        m
    }
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self::with_seed(DEFAULT_VALIDATE_SEED)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub coverage: CoverageReport,
    pub mgf: MgfReport,
    pub band_k: f64,
}

impl Validation {
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .coverage
            .families
            .iter()
            .filter(|f| !f.within_band())
            .map(|f| format!("{:?} violation rate {} exceeds the band", f.family, f.rate))
            .collect();
        for p in &self.mgf.points {
            if !p.dominated(self.band_k) {
                out.push(format!(
                    "MGF estimate above the envelope at lambda = {}",
                    p.lambda
                ));
            }
        }
        out
    }
}

pub fn validate(cfg: &ValidateConfig) -> Result<Validation> {
    let coverage = run_validity_study(&cfg.study)?;
    let m = &cfg.mgf;
    let mgf = empirical_mgf_check(
        &m.task,
        m.prior_var,
        &LossSpec::Squared,
        &m.params()?,
        &m.lambdas,
        m.samples,
        m.task.seed,
    )?;
    Ok(Validation {
        coverage,
        mgf,
        band_k: m.band_k,
    })
}

/// Writes `coverage.json` and `mgf.csv`.
pub fn write_validate(dir: &Path, cfg: &ValidateConfig) -> Result<(Validation, Vec<PathBuf>)> {
    let v = validate(cfg)?;
    let mut meta = cfg.metadata();
    meta.push("mgf_s2", v.mgf.params.s2)
        .push("mgf_c", v.mgf.params.c)
        .push("mgf_bootstrap_reps", v.mgf.bootstrap_reps);
    let cov_path = dir.join("coverage.json");
    write_json_file(&cov_path, &meta, &v.coverage)?;
    let mgf_path = dir.join("mgf.csv");
    let mut out = create(&mgf_path)?;
    meta.write(&mut out)
        .map_err(|e| PblError::io(&mgf_path, e))?;
    v.mgf.write_csv(&mut out)?;
    out.flush().map_err(|e| PblError::io(&mgf_path, e))?;
    Ok((v, vec![cov_path, mgf_path]))
}
