//! Python bindings for the narrownet library: dataset generation, the two
//! initializations, forward/Jacobian evaluation, training in the three
//! regimes, and the σ_min diagnostic.
//!
//! Matrices cross the boundary as `list[list[float]]` (row-major) and
//! vectors as `list[float]`; heads, activations, and regimes are plain
//! strings. Build with `cargo build -p narrownet-py --release` and import
//! the produced cdylib as `narrownet_py` (see python/smoke_test.py).

use narrownet::constraints::ConstraintSpec;
use narrownet::dataset::{Dataset as CoreDataset, Provenance};
use narrownet::linalg::{DenseMatrix, DenseVector};
use narrownet::model::{Activation, HeadKind, Params as CoreParams};
use narrownet::trainer::{Regime, TrainConfig};
use narrownet::Seed;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn parse_head(name: &str) -> PyResult<HeadKind> {
    match name {
        "plain" => Ok(HeadKind::Plain),
        "paired" => Ok(HeadKind::Paired),
        other => Err(PyValueError::new_err(format!(
            "unknown head \"{other}\" (expected \"plain\" or \"paired\")"
        ))),
    }
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    match name {
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        "softplus" => Ok(Activation::Softplus),
        other => Err(PyValueError::new_err(format!(
            "unknown activation \"{other}\" (expected tanh, sigmoid, or softplus)"
        ))),
    }
}

fn parse_regime(name: &str) -> PyResult<Regime> {
    match name {
        "mirrored_pgd" => Ok(Regime::MirroredPgd),
        "regular_gd" => Ok(Regime::RegularGd),
        "regular_pgd_ablation" => Ok(Regime::RegularPgdAblation),
        other => Err(PyValueError::new_err(format!(
            "unknown regime \"{other}\""
        ))),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    let mut data = Vec::with_capacity(r * c);
    for row in &rows {
        data.extend_from_slice(row);
    }
    Ok(DenseMatrix::from_vec(r, c, data))
}

fn matrix_to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Training data: unit-norm rows x and scalar targets y.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    /// Synthetic regression data: Gaussian rows normalized to unit norm,
    /// targets equal to the squared coordinate sum.
    #[staticmethod]
    fn synthetic(n: usize, d: usize, seed: u64) -> Self {
        PyDataset {
            inner: narrownet::make_synthetic(n, d, Seed(seed)),
        }
    }

    /// Wraps explicit rows and targets.
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let x = matrix_from_rows(x)?;
        if x.rows() != y.len() {
            return Err(PyValueError::new_err(format!(
                "x has {} rows but y has {} entries",
                x.rows(),
                y.len()
            )));
        }
        Ok(PyDataset {
            inner: CoreDataset {
                x,
                y: DenseVector::new(y),
                provenance: Provenance {
                    generator: "python".into(),
                    seed: Seed(0),
                },
            },
        })
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.x)
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.data().to_vec()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Network parameters: hidden weights (d×m), outer weights, head kind,
/// activation.
#[pyclass(name = "Params", skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: CoreParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(w: Vec<Vec<f64>>, v: Vec<f64>, head: &str, activation: &str) -> PyResult<Self> {
        let w = matrix_from_rows(w)?;
        let params = CoreParams::new(w, DenseVector::new(v), parse_head(head)?, parse_activation(activation)?)
            .map_err(err)?;
        Ok(PyParams { inner: params })
    }

    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.w())
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.v().data().to_vec()
    }

    #[getter]
    fn head(&self) -> &'static str {
        match self.inner.head() {
            HeadKind::Plain => "plain",
            HeadKind::Paired => "paired",
        }
    }

    #[getter]
    fn activation(&self) -> &'static str {
        self.inner.activation().name()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.width()
    }

    /// Network output for each row of x.
    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix_from_rows(x)?;
        Ok(self.inner.forward(&x).map_err(err)?.data().to_vec())
    }

    /// Hidden feature matrix (n×m plain, n×(m/2) paired).
    fn feature_matrix(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix_from_rows(x)?;
        Ok(matrix_to_rows(&self.inner.feature_matrix(&x).map_err(err)?))
    }

    /// Jacobian of the outputs w.r.t. the flattened hidden weights, n×(m·d).
    fn jacobian_w(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix_from_rows(x)?;
        Ok(matrix_to_rows(&self.inner.jacobian_w(&x).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(d={}, m={}, head={}, activation={})",
            self.inner.input_dim(),
            self.inner.width(),
            self.head(),
            self.activation()
        )
    }
}

/// Result of a training run.
#[pyclass(name = "Trace")]
struct PyTrace {
    #[pyo3(get)]
    stop_reason: String,
    #[pyo3(get)]
    iters: usize,
    #[pyo3(get)]
    loss_init: f64,
    #[pyo3(get)]
    loss_final: f64,
    #[pyo3(get)]
    relative_loss: f64,
    #[pyo3(get)]
    kkt_residual_final: f64,
    #[pyo3(get)]
    v_boundary_hits: u64,
    #[pyo3(get)]
    proj_w_activations: u64,
    /// (iter, loss, grad_mapping_norm, lambda_min or None, feasible) tuples.
    #[pyo3(get)]
    checkpoints: Vec<(usize, f64, f64, Option<f64>, bool)>,
}

#[pyfunction]
fn lecun_init(d: usize, m: usize, head: &str, activation: &str, seed: u64) -> PyResult<PyParams> {
    let params = narrownet::lecun_init(d, m, parse_head(head)?, parse_activation(activation)?, Seed(seed))
        .map_err(err)?;
    Ok(PyParams { inner: params })
}

#[pyfunction]
fn mirrored_lecun_init(
    d: usize,
    m: usize,
    head: &str,
    activation: &str,
    seed: u64,
) -> PyResult<PyParams> {
    let params =
        narrownet::mirrored_lecun_init(d, m, parse_head(head)?, parse_activation(activation)?, Seed(seed))
            .map_err(err)?;
    Ok(PyParams { inner: params })
}

/// ½ Σ (y − f)².
#[pyfunction]
fn loss(params: &PyParams, data: &PyDataset) -> PyResult<f64> {
    narrownet::loss(&params.inner, &data.inner).map_err(err)
}

/// Analytic gradients (grad_w as d×m rows, grad_v).
#[pyfunction]
fn grad(params: &PyParams, data: &PyDataset) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let g = narrownet::grad(&params.inner, &data.inner).map_err(err)?;
    Ok((matrix_to_rows(&g.grad_w), g.grad_v.data().to_vec()))
}

/// Smallest singular value of a dense matrix.
#[pyfunction]
fn min_singular_value(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = matrix_from_rows(matrix)?;
    m.min_singular_value().map_err(err)
}

/// Trains from `params` under the given regime and returns
/// (final_params, trace). `epsilon`/`zeta`/`kappa` configure the constraint
/// for the projecting regimes (kappa may be float("inf")); leave `epsilon`
/// as None for regular_gd.
#[pyfunction]
#[pyo3(signature = (params, data, regime, lr_w, lr_v, momentum=0.9, max_iters=20_000,
                    kkt_tol=1e-10, checkpoint_every=0, epsilon=None, zeta=0.001, kappa=1.0,
                    lambda_min_at_checkpoints=false))]
#[allow(clippy::too_many_arguments)]
fn train(
    params: &PyParams,
    data: &PyDataset,
    regime: &str,
    lr_w: f64,
    lr_v: f64,
    momentum: f64,
    max_iters: usize,
    kkt_tol: f64,
    checkpoint_every: usize,
    epsilon: Option<f64>,
    zeta: f64,
    kappa: f64,
    lambda_min_at_checkpoints: bool,
) -> PyResult<(PyParams, PyTrace)> {
    let regime = parse_regime(regime)?;
    let constraint = match epsilon {
        Some(eps) => Some(
            ConstraintSpec::new(eps, zeta, kappa, params.inner.w().clone()).map_err(err)?,
        ),
        None => None,
    };
    let config = TrainConfig {
        regime,
        lr_w,
        lr_v,
        momentum,
        max_iters,
        kkt_tol,
        checkpoint_every,
        seed: Seed(0),
        constraint,
        lambda_min_at_checkpoints,
    };
    let (final_params, trace) = narrownet::train(&params.inner, &data.inner, &config).map_err(err)?;
    let trace = PyTrace {
        stop_reason: trace.stop_reason.name().to_string(),
        iters: trace.iters,
        loss_init: trace.loss_init,
        loss_final: trace.loss_final,
        relative_loss: trace.relative_loss(),
        kkt_residual_final: trace.kkt_residual_final,
        v_boundary_hits: trace.v_boundary_hits,
        proj_w_activations: trace.proj_w_activations,
        checkpoints: trace
            .checkpoints
            .iter()
            .map(|c| (c.iter, c.loss, c.grad_mapping_norm, c.lambda_min, c.feasible))
            .collect(),
    };
    Ok((PyParams { inner: final_params }, trace))
}

#[pymodule]
fn narrownet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(lecun_init, m)?)?;
    m.add_function(wrap_pyfunction!(mirrored_lecun_init, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(grad, m)?)?;
    m.add_function(wrap_pyfunction!(min_singular_value, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
