//! Python bindings: load, evaluate, train and certify SMiLE models.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use smile::bench::gen_monotonic as gen_monotonic_rs;
use smile::milp::{generate, monotonicity_big_m, GeneratorConfig};
use smile::numcore::Mat;
use smile::training::{init_model, train as train_rs, TrainConfig};
use smile::{Error, InputBox, PropertySpec, SmileModel};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::TrainingAbort(_) | Error::Solver(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows_to_mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged input rows"));
    }
    Mat::new(rows.len(), cols, rows.concat()).map_err(py_err)
}

#[pyclass(name = "Model", module = "smile_py", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: SmileModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SmileModel::load(path).map(|inner| PyModel { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SmileModel::from_json(text).map(|inner| PyModel { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    /// Certified violation bound recorded by training, if any.
    #[getter]
    fn viol_bound(&self) -> Option<f64> {
        self.inner.meta.viol_bound
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&x).map_err(py_err)
    }

    fn predict_rows(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = rows_to_mat(&rows)?;
        self.inner.predict_rows(&x).map_err(py_err)
    }

    fn box_width(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.box_width(&x).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(input_dim={}, latent_dim={}, viol_bound={:?})",
            self.inner.input_dim(),
            self.inner.latent_dim(),
            self.inner.meta.viol_bound
        )
    }
}

/// Runs the generator to completion (or `t_max` nominal seconds) and returns
/// `(status, viol_bound)`.
#[pyfunction]
#[pyo3(signature = (model, property_json, box_l, box_u, t_max=None))]
fn certify(
    model: &PyModel,
    property_json: &str,
    box_l: Vec<f64>,
    box_u: Vec<f64>,
    t_max: Option<f64>,
) -> PyResult<(String, f64)> {
    let bx = InputBox::new(box_l, box_u, Vec::new()).map_err(py_err)?;
    let spec: PropertySpec = serde_json::from_str(property_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let prop = spec
        .resolve(&bx, Some(monotonicity_big_m(&model.inner, &bx)))
        .map_err(py_err)?;
    let cfg = GeneratorConfig {
        t_max: t_max.unwrap_or(f64::INFINITY),
        to_optimality: true,
        ..GeneratorConfig::default()
    };
    let res = generate(&model.inner, &prop, &bx, cfg).map_err(py_err)?;
    Ok((format!("{:?}", res.status()), res.viol_bound()))
}

/// Trains a fresh model and returns `(model, report_json)`. `config_json`
/// may be partial; missing fields take library defaults.
#[pyfunction]
#[pyo3(signature = (x, y, property_json, box_l, box_u, config_json=None))]
fn train(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    property_json: &str,
    box_l: Vec<f64>,
    box_u: Vec<f64>,
    config_json: Option<&str>,
) -> PyResult<(PyModel, String)> {
    let cfg: TrainConfig = match config_json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TrainConfig::default(),
    };
    let spec: PropertySpec = serde_json::from_str(property_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let bx = InputBox::new(box_l, box_u, Vec::new()).map_err(py_err)?;
    let xm = rows_to_mat(&x)?;
    let model = init_model(xm.cols(), &cfg);
    let prop = spec.resolve(&bx, Some(monotonicity_big_m(&model, &bx))).map_err(py_err)?;
    let rep = py
        .detach(|| train_rs(model, &xm, &y, &prop, &bx, &cfg))
        .map_err(py_err)?;
    let json = rep.to_json().map_err(py_err)?;
    Ok((PyModel { inner: rep.model }, json))
}

/// Standardized samples of `y = x + alpha sin(omega x)`; returns `(x, y, box_l, box_u)`.
#[pyfunction]
#[pyo3(signature = (alpha, omega, n=2000, seed=0))]
fn gen_monotonic(alpha: f64, omega: f64, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let ds = gen_monotonic_rs(alpha, omega, n, -10.0, 10.0, seed).map_err(py_err)?;
    let rows = (0..ds.len()).map(|r| ds.x.row(r).to_vec()).collect();
    Ok((rows, ds.y, ds.bx.l, ds.bx.u))
}

#[pymodule]
fn smile_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gen_monotonic, m)?)?;
    Ok(())
}
