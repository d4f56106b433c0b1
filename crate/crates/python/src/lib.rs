//! Python module `pbl`: posterior fitting, evidence decomposition, bounds,
//! sub-gamma parameters and the synthetic tasks.
//!
//! Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pbl_core::blr::{evidence_decomposition_with, fit_posterior, GaussianPosterior};
use pbl_core::selection::{selection_vs_averaging_report, ModelEntry, ModelFamily};
use pbl_core::{bounds, subgamma, tasks, PblError};

fn py_err(e: PblError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn design(phi: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<tasks::DesignMatrix> {
    let n = phi.len();
    let d = phi.first().map_or(0, Vec::len);
    if phi.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows of phi have different lengths"));
    }
    let flat: Vec<f64> = phi.into_iter().flatten().collect();
    let m = DMatrix::from_row_slice(n, d, &flat);
    tasks::DesignMatrix::new(m, DVector::from_vec(y)).map_err(py_err)
}

#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone, Copy)]
struct PyModelConfig {
    inner: pbl_core::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    fn new(noise_var: f64, prior_var: f64) -> PyResult<Self> {
        let inner = pbl_core::ModelConfig::new(noise_var, prior_var).map_err(py_err)?;
        Ok(PyModelConfig { inner })
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.inner.noise_var
    }

    #[getter]
    fn prior_var(&self) -> f64 {
        self.inner.prior_var
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(noise_var={}, prior_var={})",
            self.inner.noise_var, self.inner.prior_var
        )
    }
}

#[pyclass(name = "Posterior")]
struct PyPosterior {
    inner: GaussianPosterior,
}

#[pymethods]
impl PyPosterior {
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        let c = self.inner.covariance();
        c.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn log_det_precision(&self) -> f64 {
        self.inner.log_det_precision()
    }

    fn predict_mean(&self, features: Vec<f64>) -> PyResult<f64> {
        self.check(&features)?;
        Ok(self.inner.predict_mean(&features))
    }

    fn predict_var(&self, features: Vec<f64>) -> PyResult<f64> {
        self.check(&features)?;
        Ok(self.inner.predict_var(&features))
    }
}

impl PyPosterior {
    fn check(&self, features: &[f64]) -> PyResult<()> {
        if features.len() != self.inner.dim() {
            return Err(py_err(PblError::DimensionMismatch {
                expected: self.inner.dim(),
                got: features.len(),
            }));
        }
        Ok(())
    }
}

#[pyclass(name = "EvidenceReport", get_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyEvidenceReport {
    neg_log_evidence: f64,
    gibbs_emp_risk_total: f64,
    kl: f64,
    n: usize,
    d: usize,
}

impl From<pbl_core::EvidenceReport> for PyEvidenceReport {
    fn from(r: pbl_core::EvidenceReport) -> Self {
        PyEvidenceReport {
            neg_log_evidence: r.neg_log_evidence,
            gibbs_emp_risk_total: r.gibbs_emp_risk_total,
            kl: r.kl,
            n: r.n,
            d: r.d,
        }
    }
}

#[pymethods]
impl PyEvidenceReport {
    fn identity_residual(&self) -> f64 {
        (self.neg_log_evidence - self.gibbs_emp_risk_total - self.kl).abs()
    }

    fn __repr__(&self) -> String {
        format!(
            "EvidenceReport(neg_log_evidence={}, gibbs_emp_risk_total={}, kl={}, n={}, d={})",
            self.neg_log_evidence, self.gibbs_emp_risk_total, self.kl, self.n, self.d
        )
    }
}

#[pyclass(name = "SubGammaParams", get_all, from_py_object)]
#[derive(Clone, Copy)]
struct PySubGammaParams {
    s2: f64,
    c: f64,
    lambda_used: f64,
}

impl From<subgamma::SubGammaParams> for PySubGammaParams {
    fn from(p: subgamma::SubGammaParams) -> Self {
        PySubGammaParams {
            s2: p.s2,
            c: p.c,
            lambda_used: p.lambda_used,
        }
    }
}

#[pymethods]
impl PySubGammaParams {
    fn gap(&self) -> f64 {
        self.s2 / (2.0 * (1.0 - self.c))
    }
}

#[pyfunction]
fn fit(phi: Vec<Vec<f64>>, y: Vec<f64>, cfg: PyModelConfig) -> PyResult<PyPosterior> {
    let dm = design(phi, y)?;
    let inner = fit_posterior(&dm, &cfg.inner).map_err(py_err)?;
    Ok(PyPosterior { inner })
}

#[pyfunction]
fn evidence(phi: Vec<Vec<f64>>, y: Vec<f64>, cfg: PyModelConfig) -> PyResult<PyEvidenceReport> {
    let dm = design(phi, y)?;
    let post = fit_posterior(&dm, &cfg.inner).map_err(py_err)?;
    let rep = evidence_decomposition_with(&post, &dm, &cfg.inner).map_err(py_err)?;
    Ok(rep.into())
}

#[pyfunction]
fn polynomial_features(x: f64, degree: usize) -> Vec<f64> {
    tasks::polynomial_features(x, degree)
}

#[pyfunction]
#[pyo3(signature = (n, noise_var = 0.25, seed = 0))]
fn gen_sine_task(n: usize, noise_var: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let spec = tasks::SineTaskSpec {
        n,
        noise_var,
        lo: 0.0,
        hi: 2.0 * std::f64::consts::PI,
        seed,
    };
    let data = tasks::gen_sine_task(&spec).map_err(py_err)?;
    Ok((
        data.inputs().iter().map(|x| x[0]).collect(),
        data.labels().to_vec(),
    ))
}

#[pyfunction]
#[pyo3(signature = (w_star, n, input_var = 1.0, noise_var = 1.0, seed = 0))]
fn gen_linear_task(
    w_star: Vec<f64>,
    n: usize,
    input_var: f64,
    noise_var: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let spec = tasks::LinearTaskSpec {
        w_star,
        input_var,
        noise_var,
        seed,
    };
    let data = tasks::gen_linear_task(&spec, n).map_err(py_err)?;
    Ok((data.inputs().to_vec(), data.labels().to_vec()))
}

fn setting(
    input_var: f64,
    prior_var: f64,
    d: usize,
    w_star_sq_norm: f64,
    noise_var: f64,
) -> subgamma::GaussianSetting {
    subgamma::GaussianSetting {
        input_var,
        prior_var,
        d,
        w_star_sq_norm,
        noise_var,
    }
}

#[pyfunction]
#[pyo3(signature = (sigma2, input_var, prior_var, d, w_star_sq_norm, noise_var, lam = 1.0))]
fn nll_subgamma_params(
    sigma2: f64,
    input_var: f64,
    prior_var: f64,
    d: usize,
    w_star_sq_norm: f64,
    noise_var: f64,
    lam: f64,
) -> PyResult<PySubGammaParams> {
    let s = setting(input_var, prior_var, d, w_star_sq_norm, noise_var);
    subgamma::nll_subgamma_params(sigma2, &s, lam)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (input_var, prior_var, d, w_star_sq_norm, noise_var, lam = 1.0))]
fn squared_loss_subgamma_params(
    input_var: f64,
    prior_var: f64,
    d: usize,
    w_star_sq_norm: f64,
    noise_var: f64,
    lam: f64,
) -> PyResult<PySubGammaParams> {
    let s = setting(input_var, prior_var, d, w_star_sq_norm, noise_var);
    subgamma::squared_loss_subgamma_params(&s, lam)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
fn catoni_bound(emp: f64, kl: f64, n: usize, delta: f64, a: f64, b: f64) -> PyResult<f64> {
    bounds::catoni_bound(emp, kl, n, delta, a, b).map_err(py_err)
}

#[pyfunction]
fn catoni_evidence_bound(
    neg_log_evidence: f64,
    n: usize,
    delta: f64,
    a: f64,
    b: f64,
) -> PyResult<f64> {
    bounds::catoni_evidence_bound(neg_log_evidence, n, delta, a, b).map_err(py_err)
}

#[pyfunction]
fn alquier_hoeffding_bound(
    emp: f64,
    kl: f64,
    n: usize,
    delta: f64,
    lam: f64,
    a: f64,
    b: f64,
) -> PyResult<f64> {
    bounds::alquier_hoeffding_bound(emp, kl, n, delta, lam, a, b).map_err(py_err)
}

#[pyfunction]
fn subgaussian_bound(emp: f64, kl: f64, n: usize, delta: f64, s2: f64) -> PyResult<f64> {
    bounds::subgaussian_bound(emp, kl, n, delta, s2).map_err(py_err)
}

#[pyfunction]
fn subgamma_bound(emp: f64, kl: f64, n: usize, delta: f64, s2: f64, c: f64) -> PyResult<f64> {
    bounds::subgamma_bound(emp, kl, n, delta, s2, c).map_err(py_err)
}

#[pyfunction]
fn subgamma_evidence_bound(
    neg_log_evidence: f64,
    n: usize,
    delta: f64,
    s2: f64,
    c: f64,
) -> PyResult<f64> {
    bounds::subgamma_evidence_bound(neg_log_evidence, n, delta, s2, c).map_err(py_err)
}

/// Selection report as a JSON string. `reports[i]` is model `i`.
#[pyfunction]
fn selection_report_json(
    reports: Vec<PyEvidenceReport>,
    delta: f64,
    s2: f64,
    c: f64,
    sigma2: f64,
    sigma_pi2: f64,
) -> PyResult<String> {
    let entries = reports
        .iter()
        .enumerate()
        .map(|(id, r)| ModelEntry {
            id,
            degree: r.d.saturating_sub(1),
            evidence: pbl_core::EvidenceReport {
                neg_log_evidence: r.neg_log_evidence,
                gibbs_emp_risk_total: r.gibbs_emp_risk_total,
                kl: r.kl,
                n: r.n,
                d: r.d,
                sigma2,
                sigma_pi2,
            },
        })
        .collect();
    let family = ModelFamily::new(entries).map_err(py_err)?;
    let params = subgamma::SubGammaParams {
        s2,
        c,
        lambda_used: 1.0,
    };
    let rep = selection_vs_averaging_report(&family, delta, &params).map_err(py_err)?;
    serde_json::to_string(&rep).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
pub fn pbl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyEvidenceReport>()?;
    m.add_class::<PySubGammaParams>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evidence, m)?)?;
    m.add_function(wrap_pyfunction!(polynomial_features, m)?)?;
    m.add_function(wrap_pyfunction!(gen_sine_task, m)?)?;
    m.add_function(wrap_pyfunction!(gen_linear_task, m)?)?;
    m.add_function(wrap_pyfunction!(nll_subgamma_params, m)?)?;
    m.add_function(wrap_pyfunction!(squared_loss_subgamma_params, m)?)?;
    m.add_function(wrap_pyfunction!(catoni_bound, m)?)?;
    m.add_function(wrap_pyfunction!(catoni_evidence_bound, m)?)?;
    m.add_function(wrap_pyfunction!(alquier_hoeffding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(subgaussian_bound, m)?)?;
    m.add_function(wrap_pyfunction!(subgamma_bound, m)?)?;
    m.add_function(wrap_pyfunction!(subgamma_evidence_bound, m)?)?;
    m.add_function(wrap_pyfunction!(selection_report_json, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
