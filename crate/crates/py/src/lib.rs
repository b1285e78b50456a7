//! Python bindings. The module is importable as `fedmeta`.
//!
//! Vectors cross the boundary as lists of floats; batches are passed as
//! `(rows, labels)` pairs and episodes as `(support, query)` pairs.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedmeta::config::parse_config_str;
use fedmeta::data::{generate_synthetic as gen_synthetic, SyntheticSpec};
use fedmeta::episodes::Episode;
use fedmeta::federation::{fedavg as fed_avg, model_fingerprint, Checkpoint};
use fedmeta::meta::{self, ClipBound, MetaConfig, MetaGradient, MetaParams, NoiseConvention};
use fedmeta::metrics::{self, ConfusionCounts, Indicators, MetricSummary};
use fedmeta::nn::{self, Batch, ModelConfig, ParamVector};
use fedmeta::privacy::{self, CalibrationInputs, PrivacyBudget};
use fedmeta::scenario;

type Rows = (Vec<Vec<f64>>, Vec<usize>);

fn py_err(e: fedmeta::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn batch(rows: &[Vec<f64>], labels: Vec<usize>) -> fedmeta::Result<Batch> {
    Batch::from_rows(rows, labels)
}

fn episode((support, query): (Rows, Rows)) -> fedmeta::Result<Episode> {
    let support_ids = (0..support.1.len() as u64).collect();
    let query_ids = (0..query.1.len() as u64).collect();
    let classes = support.1.iter().chain(&query.1).copied().max().map_or(0, |m| m + 1);
    Ok(Episode {
        support: batch(&support.0, support.1)?,
        query: batch(&query.0, query.1)?,
        class_map: (0..classes).collect(),
        support_ids,
        query_ids,
    })
}

fn episodes(list: Vec<(Rows, Rows)>) -> fedmeta::Result<Vec<Episode>> {
    list.into_iter().map(episode).collect()
}

#[pyclass(name = "ModelConfig", module = "fedmeta", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (input_dim, hidden_dims, num_classes, batchnorm = true))]
    fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, batchnorm: bool) -> PyResult<Self> {
        ModelConfig::new(input_dim, hidden_dims, num_classes, batchnorm)
            .map(|inner| PyModelConfig { inner })
            .map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim
    }

    #[getter]
    fn hidden_dims(&self) -> Vec<usize> {
        self.inner.hidden_dims.clone()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn batchnorm(&self) -> bool {
        self.inner.batchnorm
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn fingerprint(&self) -> u64 {
        model_fingerprint(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(input_dim={}, hidden_dims={:?}, num_classes={}, batchnorm={})",
            self.inner.input_dim,
            self.inner.hidden_dims,
            self.inner.num_classes,
            if self.inner.batchnorm { "True" } else { "False" }
        )
    }
}

#[pyclass(name = "MetaParams", module = "fedmeta", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyMetaParams {
    inner: MetaParams,
}

#[pymethods]
impl PyMetaParams {
    #[new]
    fn new(theta: Vec<f64>, alpha: Vec<f64>) -> PyResult<Self> {
        MetaParams::new(theta.into(), alpha.into())
            .map(|inner| PyMetaParams { inner })
            .map_err(py_err)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.to_vec()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Checkpoint encoding of these parameters.
    #[pyo3(signature = (model, round = 0))]
    fn to_checkpoint<'py>(&self, py: Python<'py>, model: &PyModelConfig, round: u64) -> Bound<'py, PyBytes> {
        let bytes = Checkpoint {
            fingerprint: model_fingerprint(&model.inner),
            round,
            meta: self.inner.clone(),
        }
        .encode();
        PyBytes::new(py, &bytes)
    }

    /// Decodes a checkpoint into `(fingerprint, round, params)`.
    #[staticmethod]
    fn from_checkpoint(data: &[u8]) -> PyResult<(u64, u64, PyMetaParams)> {
        let c = Checkpoint::decode(data).map_err(py_err)?;
        Ok((c.fingerprint, c.round, PyMetaParams { inner: c.meta }))
    }

    fn __repr__(&self) -> String {
        format!("MetaParams(len={})", self.inner.len())
    }
}

fn wrap(inner: MetaParams) -> PyMetaParams {
    PyMetaParams { inner }
}

#[pyfunction]
fn init_params(model: &PyModelConfig, seed: u64) -> Vec<f64> {
    nn::init_params(&model.inner, &mut ChaCha8Rng::seed_from_u64(seed)).into_inner()
}

#[pyfunction]
#[pyo3(signature = (model, seed, alpha_min = 0.005, alpha_max = 0.1))]
fn init_meta(model: &PyModelConfig, seed: u64, alpha_min: f64, alpha_max: f64) -> PyMetaParams {
    wrap(MetaParams::init(&model.inner, (alpha_min, alpha_max), &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn unlabeled(rows: &[Vec<f64>]) -> fedmeta::Result<Batch> {
    batch(rows, vec![0; rows.len()])
}

/// Class probabilities, one row per input.
#[pyfunction]
fn forward(model: &PyModelConfig, params: Vec<f64>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let b = unlabeled(&inputs).map_err(py_err)?;
    nn::forward(&params.into(), &model.inner, &b).map_err(py_err)
}

#[pyfunction]
fn predict(model: &PyModelConfig, params: Vec<f64>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let b = unlabeled(&inputs).map_err(py_err)?;
    nn::predict(&params.into(), &model.inner, &b).map_err(py_err)
}

#[pyfunction]
fn loss(model: &PyModelConfig, params: Vec<f64>, inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    let b = batch(&inputs, labels).map_err(py_err)?;
    nn::loss(&params.into(), &model.inner, &b).map_err(py_err)
}

#[pyfunction]
fn grad(model: &PyModelConfig, params: Vec<f64>, inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<f64>> {
    let b = batch(&inputs, labels).map_err(py_err)?;
    nn::grad(&params.into(), &model.inner, &b).map(ParamVector::into_inner).map_err(py_err)
}

#[pyfunction]
fn hvp(
    model: &PyModelConfig,
    params: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    v: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let b = batch(&inputs, labels).map_err(py_err)?;
    nn::hvp(&params.into(), &model.inner, &b, &v.into())
        .map(ParamVector::into_inner)
        .map_err(py_err)
}

fn meta_config(inner_steps: usize, beta: f64) -> MetaConfig {
    MetaConfig {
        inner_steps,
        beta,
        clip_bound: ClipBound::Unbounded,
        ..MetaConfig::default()
    }
}

/// Exact meta-gradient `(d_theta, d_alpha)` of one episode.
#[pyfunction]
#[pyo3(signature = (model, meta, support, query, inner_steps = 1))]
fn meta_gradient(
    model: &PyModelConfig,
    meta: &PyMetaParams,
    support: Rows,
    query: Rows,
    inner_steps: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let ep = episode((support, query)).map_err(py_err)?;
    let g = meta::meta_gradient(&model.inner, &meta.inner, &ep, &meta_config(inner_steps, 0.05)).map_err(py_err)?;
    Ok((g.d_theta.into_inner(), g.d_alpha.into_inner()))
}

#[pyfunction]
fn clip_gradient(d_theta: Vec<f64>, d_alpha: Vec<f64>, clip_bound: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if !(clip_bound > 0.0) {
        return Err(PyValueError::new_err("clip_bound must be positive"));
    }
    let g = MetaGradient {
        d_theta: d_theta.into(),
        d_alpha: d_alpha.into(),
    };
    let c = meta::clip_gradient(&g, clip_bound);
    Ok((c.d_theta.into_inner(), c.d_alpha.into_inner()))
}

#[pyfunction]
#[pyo3(signature = (model, meta, episodes, beta = 0.05, inner_steps = 1))]
fn metasgd_step(
    model: &PyModelConfig,
    meta: &PyMetaParams,
    episodes: Vec<(Rows, Rows)>,
    beta: f64,
    inner_steps: usize,
) -> PyResult<PyMetaParams> {
    let eps = self::episodes(episodes).map_err(py_err)?;
    meta::metasgd_step(&model.inner, &meta.inner, &eps, &meta_config(inner_steps, beta))
        .map(wrap)
        .map_err(py_err)
}

/// Clipped and noised step; `convention` is `standard` or `literal`.
#[pyfunction]
#[pyo3(signature = (model, meta, episodes, seed, beta = 0.05, clip_bound = 1.0, sigma = 1.0, convention = "standard", inner_steps = 1))]
#[allow(clippy::too_many_arguments)]
fn metadpsgd_step(
    model: &PyModelConfig,
    meta: &PyMetaParams,
    episodes: Vec<(Rows, Rows)>,
    seed: u64,
    beta: f64,
    clip_bound: Option<f64>,
    sigma: f64,
    convention: &str,
    inner_steps: usize,
) -> PyResult<PyMetaParams> {
    let noise_convention = match convention {
        "standard" => NoiseConvention::StandardDpsgd,
        "literal" => NoiseConvention::NoiseAfterMean,
        other => return Err(PyValueError::new_err(format!("unknown noise convention '{other}'"))),
    };
    let config = MetaConfig {
        clip_bound: clip_bound.map_or(ClipBound::Unbounded, ClipBound::Finite),
        noise_scale: sigma,
        noise_convention,
        ..meta_config(inner_steps, beta)
    };
    let eps = self::episodes(episodes).map_err(py_err)?;
    meta::metadpsgd_step(&model.inner, &meta.inner, &eps, &config, &mut ChaCha8Rng::seed_from_u64(seed))
        .map(wrap)
        .map_err(py_err)
}

/// MAML step: `meta.alpha` is used as the frozen inner rate.
#[pyfunction]
#[pyo3(signature = (model, meta, episodes, beta = 0.05, inner_steps = 1))]
fn maml_step(
    model: &PyModelConfig,
    meta: &PyMetaParams,
    episodes: Vec<(Rows, Rows)>,
    beta: f64,
    inner_steps: usize,
) -> PyResult<PyMetaParams> {
    let eps = self::episodes(episodes).map_err(py_err)?;
    meta::maml_step(&model.inner, &meta.inner, &eps, &meta_config(inner_steps, beta))
        .map(wrap)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (epsilon, delta, sampling_probability, steps, c2 = 1.0))]
fn calibrate_sigma(epsilon: f64, delta: f64, sampling_probability: f64, steps: u64, c2: f64) -> PyResult<f64> {
    let budget = PrivacyBudget::new(epsilon, delta).map_err(py_err)?;
    let inputs = CalibrationInputs::new(sampling_probability, steps, c2).map_err(py_err)?;
    privacy::calibrate_sigma(&budget, &inputs).map_err(py_err)
}

#[pyfunction]
fn min_delta_for(sigma: f64, epsilon: f64) -> PyResult<f64> {
    privacy::min_delta_for(sigma, epsilon).map_err(py_err)
}

#[pyfunction]
fn fedavg(params: Vec<PyRef<'_, PyMetaParams>>, weights: Vec<f64>) -> PyResult<PyMetaParams> {
    let refs: Vec<&MetaParams> = params.iter().map(|p| &p.inner).collect();
    fed_avg(&refs, &weights).map(wrap).map_err(py_err)
}

fn indicator_dict<'py>(py: Python<'py>, i: &Indicators) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", i.accuracy)?;
    d.set_item("precision", i.precision)?;
    d.set_item("recall", i.recall)?;
    d.set_item("f1", i.f1)?;
    Ok(d)
}

/// Accuracy, precision, recall and F1; undefined values are `None`.
#[pyfunction]
#[pyo3(name = "indicators")]
fn py_indicators(py: Python<'_>, tp: u64, fp: u64, fn_: u64, tn: u64) -> PyResult<Bound<'_, PyDict>> {
    let i = metrics::indicators(&ConfusionCounts { tp, fp, fn_, tn }).map_err(py_err)?;
    indicator_dict(py, &i)
}

fn summary_dict<'py>(py: Python<'py>, s: &MetricSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", s.mean)?;
    d.set_item("halfwidth", s.halfwidth)?;
    d.set_item("n", s.n)?;
    d.set_item("excluded", s.excluded)?;
    Ok(d)
}

/// Aggregates per-task indicator dicts into means with 95% half-widths.
#[pyfunction]
fn aggregate<'py>(py: Python<'py>, per_task: Vec<Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let get = |d: &Bound<'py, PyDict>, key: &str| -> PyResult<Option<f64>> {
        match d.get_item(key)? {
            Some(v) if !v.is_none() => Ok(Some(v.extract()?)),
            _ => Ok(None),
        }
    };
    let tasks = per_task
        .iter()
        .map(|d| {
            Ok(Indicators {
                accuracy: get(d, "accuracy")?.ok_or_else(|| PyValueError::new_err("accuracy is required"))?,
                precision: get(d, "precision")?,
                recall: get(d, "recall")?,
                f1: get(d, "f1")?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = metrics::aggregate(&tasks).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("accuracy", summary_dict(py, &r.accuracy)?)?;
    d.set_item("precision", summary_dict(py, &r.precision)?)?;
    d.set_item("recall", summary_dict(py, &r.recall)?)?;
    d.set_item("f1", summary_dict(py, &r.f1)?)?;
    d.set_item("n_tasks", r.n_tasks)?;
    Ok(d)
}

/// Normalized synthetic gratings as `(rows, labels)`.
#[pyfunction]
#[pyo3(signature = (classes = vec!["normal".to_string(), "covid".to_string()], examples_per_class = 200, resolution = 16, noise = 1.0, seed = 0))]
fn generate_synthetic(
    classes: Vec<String>,
    examples_per_class: usize,
    resolution: usize,
    noise: f64,
    seed: u64,
) -> PyResult<Rows> {
    let spec = SyntheticSpec {
        class_names: classes,
        examples_per_class,
        resolution,
        noise_level: noise,
        seed,
        ..SyntheticSpec::default()
    };
    let ds = gen_synthetic(&spec).map_err(py_err)?;
    Ok(ds.examples.iter().map(|e| (e.input.to_vec(), e.label)).unzip())
}

/// Runs a scenario described by configuration text and returns the final
/// report as JSON. Artifacts are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config_text, out_dir = None))]
fn run_scenario(py: Python<'_>, config_text: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<String> {
    let cfg = parse_config_str(config_text, std::path::Path::new("")).map_err(|e| py_err(e.into()))?;
    let outcome = py.detach(|| scenario::run_scenario(&cfg)).map_err(py_err)?;
    if let Some(dir) = out_dir {
        outcome.write(&dir).map_err(py_err)?;
    }
    Ok(outcome.report.to_json())
}

#[pymodule]
#[pyo3(name = "fedmeta")]
fn fedmeta_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init_module(m)
}

/// Registers every class and function on `m`.
pub fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyMetaParams>()?;
    m.add_function(wrap_pyfunction!(init_params, m)?)?;
    m.add_function(wrap_pyfunction!(init_meta, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(grad, m)?)?;
    m.add_function(wrap_pyfunction!(hvp, m)?)?;
    m.add_function(wrap_pyfunction!(meta_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(clip_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(metasgd_step, m)?)?;
    m.add_function(wrap_pyfunction!(metadpsgd_step, m)?)?;
    m.add_function(wrap_pyfunction!(maml_step, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(min_delta_for, m)?)?;
    m.add_function(wrap_pyfunction!(fedavg, m)?)?;
    m.add_function(wrap_pyfunction!(py_indicators, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
