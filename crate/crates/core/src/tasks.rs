//! Synthetic regression tasks, feature maps, and dataset containers.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, PblError, Result};
use crate::rng::{std_normal, stream_rng, StreamRng};

/// Raw learning sample: one input vector and one label per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(PblError::DimensionMismatch {
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let k = first.len();
            if let Some(bad) = inputs.iter().find(|x| x.len() != k) {
                return Err(PblError::DimensionMismatch {
                    expected: k,
                    got: bad.len(),
                });
            }
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Number of raw input coordinates (0 for an empty dataset).
    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Writes `x_0,...,x_k,y` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header: Vec<String> = (0..self.input_dim()).map(|j| format!("x_{j}")).collect();
        header.push("y".to_string());
        out.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| PblError::io("<csv>", e))?;
        Ok(())
    }
}

/// Feature matrix `Φ` (row `i` is `φ(x_i)`) with its labels.
///
/// The Gram matrix `ΦᵀΦ` and `Φᵀy` are formed once at construction; every
/// posterior quantity downstream only needs these plus `‖y‖²`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    phi: DMatrix<f64>,
    labels: DVector<f64>,
    gram: DMatrix<f64>,
    phi_t_y: DVector<f64>,
}

impl DesignMatrix {
    pub fn new(phi: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if phi.nrows() != labels.len() {
            return Err(PblError::DimensionMismatch {
                expected: phi.nrows(),
                got: labels.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(PblError::NonFinite("design matrix"));
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(PblError::NonFinite("labels"));
        }
        let gram = phi.tr_mul(&phi);
        let phi_t_y = phi.tr_mul(&labels);
        Ok(DesignMatrix {
            phi,
            labels,
            gram,
            phi_t_y,
        })
    }

    /// Identity feature map: `φ(x) = x`.
    pub fn identity(data: &Dataset, d: usize) -> Result<Self> {
        if !data.is_empty() && data.input_dim() != d {
            return Err(PblError::DimensionMismatch {
                expected: d,
                got: data.input_dim(),
            });
        }
        let phi = DMatrix::from_fn(data.len(), d, |i, j| data.inputs[i][j]);
        Self::new(phi, DVector::from_column_slice(data.labels()))
    }

    /// Polynomial feature map on the first input coordinate.
    pub fn polynomial(data: &Dataset, degree: usize) -> Result<Self> {
        let d = degree + 1;
        let mut phi = DMatrix::zeros(data.len(), d);
        for (i, x) in data.inputs.iter().enumerate() {
            let x0 = *x.first().ok_or(PblError::DimensionMismatch {
                expected: 1,
                got: 0,
            })?;
            for (j, v) in polynomial_features(x0, degree).into_iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        Self::new(phi, DVector::from_column_slice(data.labels()))
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn d(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn phi_t_y(&self) -> &DVector<f64> {
        &self.phi_t_y
    }
}

/// `[1, x, x², ..., x^degree]`.
pub fn polynomial_features(x: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut p = 1.0;
    for _ in 0..=degree {
        out.push(p);
        p *= x;
    }
    out
}

/// `y = sin(x) + ε` with `x ~ U[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTaskSpec {
    pub n: usize,
    pub noise_var: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl SineTaskSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.lo < self.hi, || {
            format!("input interval [{}, {}] is empty", self.lo, self.hi)
        })?;
        ensure(self.noise_var > 0.0 && self.noise_var.is_finite(), || {
            format!("noise variance {} must be positive", self.noise_var)
        })
    }
}

/// `y = w*·x + ε` with `x ~ N(0, σx² I_d)` and `ε ~ N(0, σε²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTaskSpec {
    pub w_star: Vec<f64>,
    pub input_var: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl LinearTaskSpec {
    pub fn d(&self) -> usize {
        self.w_star.len()
    }

    pub fn w_star_sq_norm(&self) -> f64 {
        self.w_star.iter().map(|v| v * v).sum()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        LinearTaskSpec {
            seed,
            ..self.clone()
        }
    }

    /// Target vector of dimension `d` with every coordinate equal and the
    /// requested Euclidean norm.
    pub fn isotropic_target(d: usize, norm: f64) -> Vec<f64> {
        vec![norm / (d as f64).sqrt(); d]
    }

    /// Generalization squared loss of the linear predictor `w`:
    /// `σx²‖w* − w‖² + σε²`.
    pub fn squared_risk(&self, w: &[f64]) -> f64 {
        let dist: f64 = self
            .w_star
            .iter()
            .zip(w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.input_var * dist + self.noise_var
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.w_star.is_empty(), || {
            "task dimension must be at least 1".into()
        })?;
        ensure(self.input_var > 0.0 && self.input_var.is_finite(), || {
            format!("input variance {} must be positive", self.input_var)
        })?;
        ensure(self.noise_var > 0.0 && self.noise_var.is_finite(), || {
            format!("noise variance {} must be positive", self.noise_var)
        })?;
        ensure(self.w_star.iter().all(|v| v.is_finite()), || {
            "target weights must be finite".into()
        })
    }

    /// Draws `n` examples from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<f64>) {
        let sx = self.input_var.sqrt();
        let se = self.noise_var.sqrt();
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..self.d()).map(|_| sx * std_normal(rng)).collect();
            let eps = std_normal(rng);
            let y = dot(&self.w_star, &x) + se * eps;
            inputs.push(x);
            labels.push(y);
        }
        (inputs, labels)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stream id used for training data; test sets use other ids.
pub const TRAIN_STREAM: u64 = 0;

pub fn gen_sine_task(spec: &SineTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, TRAIN_STREAM);
    Ok(sample_sine(spec, spec.n, &mut rng))
}

pub(crate) fn sample_sine(spec: &SineTaskSpec, n: usize, rng: &mut StreamRng) -> Dataset {
    let unif = Uniform::new(spec.lo, spec.hi).expect("validated interval");
    let se = spec.noise_var.sqrt();
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = unif.sample(rng);
        let eps = std_normal(rng);
        inputs.push(vec![x]);
        labels.push(x.sin() + se * eps);
    }
    Dataset { inputs, labels }
}

pub fn gen_linear_task(spec: &LinearTaskSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, TRAIN_STREAM);
    let (inputs, labels) = spec.sample(n, &mut rng);
    Ok(Dataset { inputs, labels })
}

/// Same draws as [`gen_linear_task`], written straight into a design matrix
/// with the identity feature map.
pub fn gen_linear_design(spec: &LinearTaskSpec, n: usize) -> Result<DesignMatrix> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, TRAIN_STREAM);
    let d = spec.d();
    let sx = spec.input_var.sqrt();
    let se = spec.noise_var.sqrt();
    let mut phi = DMatrix::zeros(n, d);
    let mut labels = DVector::zeros(n);
    let mut x = vec![0.0; d];
    for i in 0..n {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = sx * std_normal(&mut rng);
            phi[(i, j)] = *xj;
        }
        labels[i] = dot(&spec.w_star, &x) + se * std_normal(&mut rng);
    }
    DesignMatrix::new(phi, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_features_examples() {
        assert_eq!(polynomial_features(2.0, 3), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(polynomial_features(0.0, 4), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(polynomial_features(1.5, 2), vec![1.0, 1.5, 2.25]);
        assert_eq!(polynomial_features(-3.0, 0), vec![1.0]);
    }

    #[test]
    fn sine_task_shapes() {
        let spec = SineTaskSpec {
            n: 15,
            noise_var: 0.25,
            lo: 0.0,
            hi: std::f64::consts::TAU,
            seed: 3,
        };
        let data = gen_sine_task(&spec).unwrap();
        assert_eq!(data.len(), 15);
        for (x, y) in data.inputs().iter().zip(data.labels()) {
            assert!((0.0..=std::f64::consts::TAU).contains(&x[0]));
            assert!((y - x[0].sin()).abs() < 6.0 * 0.5);
        }
        let empty = gen_sine_task(&SineTaskSpec { n: 0, ..spec }).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn sine_task_noiseless_limit() {
        let spec = SineTaskSpec {
            n: 5,
            noise_var: 1e-30,
            lo: 0.0,
            hi: 6.0,
            seed: 11,
        };
        let data = gen_sine_task(&spec).unwrap();
        for (x, y) in data.inputs().iter().zip(data.labels()) {
            assert!((y - x[0].sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = SineTaskSpec {
            n: 3,
            noise_var: 0.1,
            lo: 1.0,
            hi: 1.0,
            seed: 0,
        };
        assert!(gen_sine_task(&bad).is_err());
        let bad = LinearTaskSpec {
            w_star: vec![],
            input_var: 1.0,
            noise_var: 1.0,
            seed: 0,
        };
        assert!(gen_linear_task(&bad, 3).is_err());
        let bad = LinearTaskSpec {
            w_star: vec![1.0],
            input_var: 1.0,
            noise_var: 0.0,
            seed: 0,
        };
        assert!(gen_linear_task(&bad, 3).is_err());
    }

    #[test]
    fn zero_signal_zero_noise_labels() {
        let spec = LinearTaskSpec {
            w_star: vec![0.0; 4],
            input_var: 1.0,
            noise_var: 1e-30,
            seed: 5,
        };
        let data = gen_linear_task(&spec, 50).unwrap();
        assert!(data.labels().iter().all(|y| y.abs() < 1e-12));
    }

    #[test]
    fn determinism() {
        let spec = LinearTaskSpec {
            w_star: vec![0.3, -0.2],
            input_var: 2.0,
            noise_var: 0.5,
            seed: 99,
        };
        let a = gen_linear_task(&spec, 20).unwrap();
        let b = gen_linear_task(&spec, 20).unwrap();
        assert_eq!(a, b);
        let c = gen_linear_task(&spec.with_seed(100), 20).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn direct_design_matches_dataset_route() {
        let spec = LinearTaskSpec {
            w_star: vec![0.5, -0.25, 0.1],
            input_var: 1.5,
            noise_var: 0.2,
            seed: 42,
        };
        let a = gen_linear_design(&spec, 17).unwrap();
        let b = DesignMatrix::identity(&gen_linear_task(&spec, 17).unwrap(), 3).unwrap();
        assert_eq!(a.phi(), b.phi());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn design_matrix_rejects_non_finite() {
        let phi = DMatrix::from_row_slice(2, 1, &[1.0, f64::INFINITY]);
        let y = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(
            DesignMatrix::new(phi, y),
            Err(PblError::NonFinite(_))
        ));
        let phi = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0]);
        assert!(DesignMatrix::new(phi, y).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let data = Dataset::new(vec![vec![1.0, 2.0], vec![3.0, 4.5]], vec![0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x_0,x_1,y\n1,2,0.5\n3,4.5,-1\n");
    }
}
