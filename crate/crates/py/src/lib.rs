//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString};

use veegan_core::bound::{sweep_grid, BoundPoint, LinearGaussianFamily};
use veegan_core::exp::{run_experiment, run_suite, ExperimentConfig, RunOptions};
use veegan_core::metrics::{evaluate_model, evaluate_samples, EvalConfig, RunMetrics};
use veegan_core::synth::{make_grid, make_ring, make_standard_normal, MixtureSpec};
use veegan_core::train::{train as core_train, Method, TrainedModel, TrainerConfig};
use veegan_core::{Error, Rng, Tensor};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let c = t.shape().last().copied().unwrap_or(1).max(1);
    t.data().chunks(c).map(<[f64]>::to_vec).collect()
}

fn to_toml(v: &Bound<'_, PyAny>) -> PyResult<toml::Value> {
    if v.is_instance_of::<PyBool>() {
        Ok(toml::Value::Boolean(v.extract()?))
    } else if v.is_instance_of::<PyInt>() {
        Ok(toml::Value::Integer(v.extract()?))
    } else if v.is_instance_of::<PyFloat>() {
        Ok(toml::Value::Float(v.extract()?))
    } else if v.is_instance_of::<PyString>() {
        Ok(toml::Value::String(v.extract()?))
    } else if let Ok(l) = v.cast::<PyList>() {
        Ok(toml::Value::Array(l.iter().map(|x| to_toml(&x)).collect::<PyResult<_>>()?))
    } else if let Ok(d) = v.cast::<PyDict>() {
        Ok(toml::Value::Table(table(d)?))
    } else {
        Err(PyValueError::new_err(format!("unsupported config value {v}")))
    }
}

fn table(d: &Bound<'_, PyDict>) -> PyResult<toml::Table> {
    d.iter().map(|(k, v)| Ok((k.extract::<String>()?, to_toml(&v)?))).collect()
}

fn metrics_dict<'py>(py: Python<'py>, m: &RunMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("modes", m.modes)?;
    d.set_item("hq_fraction", m.hq_fraction)?;
    d.set_item("ivom", m.ivom)?;
    Ok(d)
}

/// A Gaussian mixture benchmark.
#[pyclass(name = "Mixture", module = "veegan", frozen)]
struct PyMixture(MixtureSpec);

#[pymethods]
impl PyMixture {
    #[staticmethod]
    #[pyo3(signature = (n_modes=8, radius=2.0, sigma=0.02))]
    fn ring(n_modes: usize, radius: f64, sigma: f64) -> PyResult<Self> {
        make_ring(n_modes, radius, sigma).map(PyMixture).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (side=5, spacing=2.0, sigma=0.05))]
    fn grid(side: usize, spacing: f64, sigma: f64) -> PyResult<Self> {
        make_grid(side, spacing, sigma).map(PyMixture).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (dim=1))]
    fn standard_normal(dim: usize) -> PyResult<Self> {
        make_standard_normal(dim).map(PyMixture).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MixtureSpec::from_json(text).map(PyMixture).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.0.n_components()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        rows(self.0.means())
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        rows(&self.0.sample(&mut Rng::new(seed), n))
    }

    /// Modes captured and high-quality fraction of the given points.
    fn evaluate<'py>(&self, py: Python<'py>, samples: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let t = Tensor::from_rows(&samples).map_err(err)?;
        metrics_dict(py, &evaluate_samples(&t, &self.0).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Mixture(components={}, dim={}, sigma={})", self.0.n_components(), self.0.dim(), self.0.sigma())
    }
}

/// Trained networks of one run.
#[pyclass(name = "Model", module = "veegan", frozen)]
struct PyModel(TrainedModel);

#[pymethods]
impl PyModel {
    #[getter]
    fn method(&self) -> &'static str {
        self.0.config.method.name()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        self.0.sample(&mut Rng::new(seed), n).map(|t| rows(&t)).map_err(err)
    }

    /// Loss trace as `(columns, [(step, values), ...])`.
    fn trace(&self) -> (Vec<String>, Vec<(usize, Vec<f64>)>) {
        (self.0.trace.columns.clone(), self.0.trace.rows.clone())
    }

    #[pyo3(signature = (mixture, seed, n_samples=2500))]
    fn evaluate<'py>(&self, py: Python<'py>, mixture: &PyMixture, seed: u64, n_samples: usize) -> PyResult<Bound<'py, PyDict>> {
        let cfg = EvalConfig {
            n_samples,
            ..EvalConfig::default()
        };
        metrics_dict(py, &evaluate_model(&self.0, &mixture.0, &cfg, seed).map_err(err)?)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }
}

/// Trains one method on `mixture`; keyword arguments override trainer settings.
#[pyfunction]
#[pyo3(signature = (mixture, method, seed=0, **overrides))]
fn train(py: Python<'_>, mixture: &PyMixture, method: &str, seed: u64, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<PyModel> {
    let method = Method::parse(method).map_err(err)?;
    let t = overrides.map(table).transpose()?.unwrap_or_default();
    let mut cfg: TrainerConfig = t.try_into().map_err(|e: toml::de::Error| PyValueError::new_err(e.to_string()))?;
    cfg.method = method;
    cfg.seed = seed;
    let spec = mixture.0.clone();
    py.detach(move || core_train(&spec, &cfg)).map(PyModel).map_err(err)
}

/// `(lhs, rhs)` of the entropy bound at one linear-Gaussian family member.
#[pyfunction]
fn bound_point(a: f64, b: f64, s: f64) -> PyResult<(f64, f64)> {
    let p = BoundPoint::evaluate(LinearGaussianFamily::new(a, b, s).map_err(err)?).map_err(err)?;
    Ok((p.lhs, p.rhs))
}

/// Sweeps the default grid: `(points, min_margin, violations)`.
#[pyfunction]
#[pyo3(signature = (tol=1e-9))]
fn check_bound(tol: f64) -> PyResult<(usize, f64, usize)> {
    let r = sweep_grid(tol, false).map_err(err)?;
    Ok((r.points, r.min_margin, r.violations.len()))
}

/// Finite-difference relative errors of the gradient suite.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn grad_check(seed: u64) -> PyResult<Vec<(String, f64)>> {
    Ok(run_suite(seed).map_err(err)?.into_iter().map(|r| (r.name, r.rel_err)).collect())
}

/// Runs an experiment file and returns the `results.csv` text.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir, jobs=1, long=false))]
fn run(py: Python<'_>, config_path: std::path::PathBuf, out_dir: std::path::PathBuf, jobs: usize, long: bool) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config_path).map_err(err)?;
    let opts = RunOptions {
        out_dir,
        long,
        timings: false,
        jobs,
    };
    py.detach(move || {
        let o = run_experiment(&cfg, &opts)?;
        Ok(std::fs::read_to_string(o.out_dir.join("results.csv"))?)
    })
    .map_err(err)
}

#[pymodule]
fn veegan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixture>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(bound_point, m)?)?;
    m.add_function(wrap_pyfunction!(check_bound, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
