use nclass_core::alcla::{self, AlClaConfig, Checkpoint, DecisionRule};
use nclass_core::baselines::{self, TradeoffCurve, DEFAULT_LAMBDA_GRID};
use nclass_core::dataset::{self, DatasetConfig};
use nclass_core::fockstats::{self, StateSpec};
use nclass_core::witnesses::{self, WitnessKind, WitnessReport};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: nclass_core::Error) -> PyErr {
    match e {
        nclass_core::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(json: &str) -> PyResult<StateSpec> {
    let s: StateSpec = serde_json::from_str(json).map_err(json_err)?;
    s.validate().map_err(err)?;
    Ok(s)
}

type Report = (String, f64, Option<f64>, f64, bool);

fn report(r: WitnessReport) -> Report {
    let flagged = r.is_nonclassical();
    (r.name, r.value, r.stderr, r.threshold, flagged)
}

type Point = (f64, f64, f64, f64);

fn points(c: &TradeoffCurve) -> Vec<Point> {
    c.points.iter().map(|p| (p.param, p.acc_classical, p.acc_nonclassical, p.total)).collect()
}

/// Photon-number distribution of a state given as JSON, e.g. `{"family": "coherent", "alpha": 1.0}`.
#[pyfunction]
#[pyo3(signature = (state, cutoff=None))]
fn photon_distribution(state: &str, cutoff: Option<usize>) -> PyResult<Vec<f64>> {
    let s = spec(state)?;
    let d = match cutoff {
        Some(c) => fockstats::photon_distribution(&s, c),
        None => fockstats::photon_distribution_auto(&s),
    }
    .map_err(err)?;
    Ok(d.probs)
}

/// Raw moments ⟨n^k⟩ for k = 1..=order.
#[pyfunction]
fn raw_moments(probs: Vec<f64>, order: usize) -> PyResult<Vec<f64>> {
    let d = fockstats::PhotonDistribution::from_probs(probs).map_err(err)?;
    Ok(fockstats::moments(&d, order).map_err(err)?.raw)
}

/// (name, value, stderr, threshold, nonclassical).
#[pyfunction]
fn mandel_q(probs: Vec<f64>) -> PyResult<Report> {
    witnesses::mandel_q(&fockstats::moments_of_probs(&probs, 2)).map(report).map_err(err)
}

#[pyfunction]
fn q3(probs: Vec<f64>) -> PyResult<Report> {
    witnesses::q3_pnr(&fockstats::moments_of_probs(&probs, 3)).map(report).map_err(err)
}

#[pyfunction]
fn klyshko(probs: Vec<f64>, k: usize) -> PyResult<Report> {
    witnesses::klyshko(&probs, k).map(report).map_err(err)
}

#[pyclass(name = "Dataset", module = "nclass")]
struct PyDataset {
    inner: dataset::Dataset,
    config: Option<DatasetConfig>,
}

#[pymethods]
impl PyDataset {
    /// Simulate one of the presets table1..table4.
    #[staticmethod]
    #[pyo3(signature = (name, samples=1000, seed=0))]
    fn preset(name: &str, samples: usize, seed: u64) -> PyResult<Self> {
        let config = dataset::preset(name, samples, seed).map_err(err)?;
        let inner = dataset::simulate(&config).map_err(err)?;
        Ok(Self { inner, config: Some(config) })
    }

    #[staticmethod]
    fn simulate(config_json: &str) -> PyResult<Self> {
        let config: DatasetConfig = serde_json::from_str(config_json).map_err(json_err)?;
        config.validate().map_err(err)?;
        let inner = dataset::simulate(&config).map_err(err)?;
        Ok(Self { inner, config: Some(config) })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: dataset::Dataset::read(path).map_err(err)?, config: None })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d_x(&self) -> PyResult<usize> {
        self.inner.d_x().map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.records.iter().map(|r| r.label).collect()
    }

    #[getter]
    fn families(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.family.clone()).collect()
    }

    /// Detection outcomes of one state, one row per shot.
    fn samples(&self, index: usize) -> PyResult<Vec<Vec<u32>>> {
        self.inner
            .records
            .get(index)
            .map(|r| r.samples.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no state {index}")))
    }

    /// Bias sweep of a classical witness: (bias, acc_classical, acc_nonclassical, total) rows.
    fn witness_curve(&self, witness: &str, biases: Vec<f64>) -> PyResult<Vec<Point>> {
        let w: WitnessKind = witness.parse().map_err(err)?;
        let detector = match (&self.config, self.inner.detector()) {
            (Some(c), _) => c.detector.clone(),
            (None, Some(d)) => d.clone(),
            (None, None) => return Err(PyValueError::new_err("dataset carries no detector")),
        };
        let c = dataset::witness_curve(&self.inner, &detector, w, &biases).map_err(err)?;
        Ok(points(&c))
    }

    /// Moment features used by the SVM baseline, one row per state.
    fn moment_features(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.sample_sets().map_err(err)?.iter().map(baselines::moment_features).collect())
    }
}

fn model_config(config: Option<&str>, d_x: usize, seed: Option<u64>) -> PyResult<AlClaConfig> {
    let mut cfg = match config {
        Some(text) => {
            let mut v: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
            if let Some(obj) = v.as_object_mut() {
                obj.entry("d_x").or_insert(d_x.into());
            }
            serde_json::from_value::<AlClaConfig>(v).map_err(json_err)?
        }
        None => AlClaConfig::new(d_x, 2),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pyclass(name = "Model", module = "nclass")]
struct PyModel {
    ckpt: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// Train on a dataset. `config` is model-config JSON; d_x comes from the dataset.
    #[staticmethod]
    #[pyo3(signature = (data, config=None, seed=None))]
    fn train(py: Python<'_>, data: &PyDataset, config: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let cfg = model_config(config, data.inner.d_x().map_err(err)?, seed)?;
        let sets = data.inner.sample_sets().map_err(err)?;
        let outcome = py.detach(|| alcla::train(&sets, &cfg)).map_err(err)?;
        Ok(Self { ckpt: Checkpoint::new(&cfg, &outcome) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { ckpt: Checkpoint::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let json = self.ckpt.to_json().map_err(err)?;
        dataset::write_atomic(std::path::Path::new(path), json.as_bytes()).map_err(err)
    }

    /// Decision rule as a polynomial in the moments.
    fn rule(&self) -> PyResult<String> {
        Ok(DecisionRule::extract(&self.ckpt.params(), &self.ckpt.basis().map_err(err)?).to_string())
    }

    /// (f, y, predicted label) per state.
    fn predict(&self, data: &PyDataset) -> PyResult<Vec<(f64, f64, u8)>> {
        let (params, basis) = (self.ckpt.params(), self.ckpt.basis().map_err(err)?);
        data.inner
            .sample_sets()
            .map_err(err)?
            .iter()
            .map(|s| {
                let p = alcla::forward(s, &params, &basis).map_err(err)?;
                Ok((p.f, p.y, p.label().as_u8()))
            })
            .collect()
    }

    /// Per-epoch (loss, train total accuracy).
    #[getter]
    fn history(&self) -> Vec<(f64, f64)> {
        self.ckpt.history.iter().map(|e| (e.loss, e.train.total)).collect()
    }
}

/// λ sweep of the classifier: (λ, acc_classical, acc_nonclassical, total) rows.
#[pyfunction]
#[pyo3(signature = (data, config=None, grid=None, seed=None))]
fn lambda_sweep(
    py: Python<'_>,
    data: &PyDataset,
    config: Option<&str>,
    grid: Option<Vec<f64>>,
    seed: Option<u64>,
) -> PyResult<Vec<Point>> {
    let cfg = model_config(config, data.inner.d_x().map_err(err)?, seed)?;
    let grid = grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    let sets = data.inner.sample_sets().map_err(err)?;
    let (curve, _) = py.detach(|| baselines::lambda_sweep(&sets, &cfg, &grid)).map_err(err)?;
    Ok(points(&curve))
}

/// Fit the linear SVM on features and 0/1 labels; returns the decision values on `evaluate`.
#[pyfunction]
#[pyo3(signature = (features, labels, evaluate, c=1.0))]
fn svm_decisions(features: Vec<Vec<f64>>, labels: Vec<u8>, evaluate: Vec<Vec<f64>>, c: f64) -> PyResult<Vec<f64>> {
    let labels = labels
        .into_iter()
        .map(fockstats::Label::from_u8)
        .collect::<nclass_core::Result<Vec<_>>>()
        .map_err(err)?;
    let model = baselines::svm_fit(&features, &labels, c).map_err(err)?;
    Ok(evaluate.iter().map(|x| model.decision(x)).collect())
}

#[pymodule]
fn nclass(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(photon_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(raw_moments, m)?)?;
    m.add_function(wrap_pyfunction!(mandel_q, m)?)?;
    m.add_function(wrap_pyfunction!(q3, m)?)?;
    m.add_function(wrap_pyfunction!(klyshko, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(svm_decisions, m)?)?;
    Ok(())
}
