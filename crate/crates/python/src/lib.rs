//! Python bindings: `import mitigate_py`.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mitigate::synth::{make_synthetic, SyntheticSpec};
use mitigate::{eval, model, select};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Round-trips a serde value through Python's `json` module.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(
    py: Python<'_>,
    obj: Option<&Bound<'_, PyDict>>,
) -> PyResult<T> {
    let text: String = match obj {
        Some(d) => py.import("json")?.call_method1("dumps", (d,))?.extract()?,
        None => "{}".into(),
    };
    serde_json::from_str(&text).map_err(value_err)
}

/// An attributed graph with optional anomaly ground truth.
#[pyclass(name = "Graph", module = "mitigate_py", frozen)]
struct PyGraph {
    inner: mitigate::Graph,
}

#[pymethods]
impl PyGraph {
    /// Builds a graph from an edge list, a feature matrix and class labels.
    #[new]
    #[pyo3(signature = (edges, features, labels, num_classes))]
    fn new(
        edges: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> PyResult<Self> {
        let rows = features.len();
        let cols = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != cols) {
            return Err(value_err("feature rows have different lengths"));
        }
        let flat = features.into_iter().flatten().collect();
        let x = Array2::from_shape_vec((rows, cols), flat).map_err(value_err)?;
        let inner = mitigate::Graph::new(&edges, x, labels, num_classes).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Stochastic block model graph; keyword overrides follow the Rust
    /// `SyntheticSpec` field names.
    #[staticmethod]
    #[pyo3(signature = (seed = 0, **spec))]
    fn synthetic(py: Python<'_>, seed: u64, spec: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let spec: SyntheticSpec = from_py(py, spec)?;
        let inner = make_synthetic(&spec, seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = mitigate::load_graph(path).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        mitigate::save_graph(&self.inner, path).map_err(runtime_err)
    }

    /// Injects structural and contextual anomalies; returns the new graph
    /// and a report dict.
    #[pyo3(signature = (p = 15, q = 5, k_cand = 50, n_contextual = 75, seed = 0))]
    fn inject<'py>(
        &self,
        py: Python<'py>,
        p: usize,
        q: usize,
        k_cand: usize,
        n_contextual: usize,
        seed: u64,
    ) -> PyResult<(PyGraph, Bound<'py, PyAny>)> {
        let cfg = mitigate::InjectionConfig {
            p,
            q,
            k_cand,
            n_contextual,
            seed,
        };
        let (inner, report) = mitigate::inject_all(&self.inner, &cfg).map_err(value_err)?;
        Ok((PyGraph { inner }, to_py(py, &report)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn attr_dim(&self) -> usize {
        self.inner.attr_dim()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.adjacency().nnz() / 2
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.adjacency().edges()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner
            .features()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    fn class_labels(&self) -> Vec<Option<usize>> {
        self.inner.class_labels().to_vec()
    }

    /// Per-node ground truth, or `None` before injection.
    fn anomaly_labels(&self) -> Option<Vec<bool>> {
        self.inner.anomaly_labels()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, edges={}, classes={}, attr_dim={}, anomalies={})",
            self.inner.n(),
            self.inner.adjacency().nnz() / 2,
            self.inner.num_classes(),
            self.inner.attr_dim(),
            self.inner.anomaly_count()
        )
    }
}

/// Validation, test, initial labeled and pool node ids.
#[pyclass(name = "Splits", module = "mitigate_py", frozen, get_all)]
struct PySplits {
    val_ids: Vec<usize>,
    test_ids: Vec<usize>,
    initial_class_labeled: Vec<usize>,
    pool_ids: Vec<usize>,
}

impl PySplits {
    fn to_rust(&self) -> mitigate::Splits {
        mitigate::Splits {
            val_ids: self.val_ids.clone(),
            test_ids: self.test_ids.clone(),
            initial_class_labeled: self.initial_class_labeled.clone(),
            pool_ids: self.pool_ids.clone(),
        }
    }
}

#[pyfunction]
#[pyo3(signature = (graph, per_class = 20, n_val = 500, n_test = 1000, seed = 0))]
fn split(
    graph: &PyGraph,
    per_class: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> PyResult<PySplits> {
    let s =
        mitigate::split_dataset(&graph.inner, per_class, n_val, n_test, seed).map_err(value_err)?;
    Ok(PySplits {
        val_ids: s.val_ids,
        test_ids: s.test_ids,
        initial_class_labeled: s.initial_class_labeled,
        pool_ids: s.pool_ids,
    })
}

/// Runs one seeded active-learning loop. `config` is a dict with the
/// fields of the Rust `RunConfig` (missing fields take defaults). Returns
/// the run result as a dict.
#[pyfunction]
#[pyo3(signature = (graph, splits, config = None))]
fn run<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    splits: &PySplits,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: mitigate::RunConfig = from_py(py, config)?;
    let splits = splits.to_rust();
    let result = py
        .detach(|| mitigate::run(&graph.inner, &splits, &cfg))
        .map_err(|e| match e {
            mitigate::RunError::Config(_) => value_err(e),
            other => runtime_err(other),
        })?;
    to_py(py, &result)
}

#[pyfunction]
fn auc_roc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc_roc(&scores, &labels).map_err(value_err)
}

#[pyfunction]
fn auc_pr(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc_pr(&scores, &labels).map_err(value_err)
}

#[pyfunction]
fn znorm(x: Vec<f64>) -> Vec<f64> {
    model::znorm(&x)
}

#[pyfunction]
#[pyo3(signature = (entropy, anomaly, phi = 2.0))]
fn hybrid_score(entropy: Vec<f64>, anomaly: Vec<f64>, phi: f64) -> PyResult<Vec<f64>> {
    if entropy.len() != anomaly.len() {
        return Err(value_err("entropy and anomaly lengths differ"));
    }
    Ok(model::hybrid_score(&entropy, &anomaly, phi))
}

/// K-Medoids on the rows of `points`; returns `(medoid rows, assignment, cost)`.
#[pyfunction]
#[pyo3(signature = (points, m, seed = 0, max_iters = 100))]
fn kmedoids(
    points: Vec<Vec<f64>>,
    m: usize,
    seed: u64,
    max_iters: usize,
) -> PyResult<(Vec<usize>, Vec<usize>, f64)> {
    let rows = points.len();
    let cols = points.first().map_or(0, Vec::len);
    let x = Array2::from_shape_vec((rows, cols), points.into_iter().flatten().collect())
        .map_err(value_err)?;
    let ids: Vec<usize> = (0..rows).collect();
    let dist = select::pairwise_distance(&x, &ids);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = select::kmedoids(&dist, m, &mut rng, max_iters).map_err(value_err)?;
    let assignment = c.assignment.iter().map(|&k| c.medoids[k]).collect();
    Ok((c.medoids, assignment, c.cost))
}

#[pymodule]
fn mitigate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySplits>()?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(auc_roc, m)?)?;
    m.add_function(wrap_pyfunction!(auc_pr, m)?)?;
    m.add_function(wrap_pyfunction!(znorm, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_score, m)?)?;
    m.add_function(wrap_pyfunction!(kmedoids, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
