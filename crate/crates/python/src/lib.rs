//! Python bindings for the memristor-rl simulator.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mrl::config::Config;
use mrl::device::{Crossbar, DeviceCell, DeviceParams, VariationMode};
use mrl::harness::{self, Experiment, Setting};
use mrl::network::{self, SeparateNetWeights, SharedNetWeights, WeightLayout, INPUTS};
use mrl::pendulum::{self, Action, PendulumState};
use mrl::training::{Approach, TrialRecord, WritePath};

fn err(e: mrl::error::Error) -> PyErr {
    match e {
        mrl::error::Error::Io(_) | mrl::error::Error::Csv(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = mrl::error::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

type State = (f64, f64, f64, f64);

fn input(x: Vec<f64>) -> PyResult<[f64; INPUTS]> {
    x.try_into()
        .map_err(|_| PyValueError::new_err(format!("expected {INPUTS} inputs")))
}

/// Run configuration, loaded from or rendered to TOML.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: Config,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => Config::from_toml(t).map_err(err)?,
            None => Config::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Config::load(path.as_ref()).map(|inner| Self { inner }).map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    fn hash(&self) -> PyResult<String> {
        self.inner.hash().map_err(err)
    }

    #[getter]
    fn scale(&self) -> String {
        self.inner.harness.scale.to_string()
    }

    #[getter]
    fn test_states(&self) -> usize {
        self.inner.harness.effective_test_states()
    }
}

/// Advances the pendulum one control step. Returns the next state as
/// `(theta, theta_dot, alpha, alpha_dot)`, the reward and whether the
/// trial failed.
#[pyfunction]
#[pyo3(signature = (state, ccw, mass_pct = 0.0, length_pct = 0.0))]
fn pendulum_step(state: State, ccw: bool, mass_pct: f64, length_pct: f64) -> PyResult<(State, i32, bool)> {
    let cfg = pendulum::PendulumConfig::default().with_variation(mass_pct, length_pct);
    let s = PendulumState::new(state.0, state.1, state.2, state.3);
    let out = pendulum::step(s, Action::from_bit(ccw), &cfg).map_err(err)?;
    let n = out.state;
    Ok(((n.theta, n.theta_dot, n.alpha, n.alpha_dot), out.reward, out.failed))
}

/// Network input vector for a pendulum state, including the bias term.
#[pyfunction]
fn normalize_state(state: State) -> Vec<f64> {
    let s = PendulumState::new(state.0, state.1, state.2, state.3);
    pendulum::normalize_state(&s, &Default::default()).to_vec()
}

/// Weights of the separate evaluation and action networks.
#[pyclass(name = "SeparateNet", from_py_object)]
#[derive(Clone)]
struct PySeparateNet {
    inner: SeparateNetWeights,
}

#[pymethods]
impl PySeparateNet {
    #[new]
    #[pyo3(signature = (weights = None))]
    fn new(weights: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match weights {
            Some(w) => SeparateNetWeights::from_flat(&w).map_err(err)?,
            None => SeparateNetWeights::zeros(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self {
            inner: SeparateNetWeights::random(&mut mrl::seed::rng(seed, "py.separate", 0)),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        mrl::checkpoint::load(path.as_ref())
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mrl::checkpoint::save(&self.inner, path.as_ref()).map_err(err)
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.to_flat()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(network::eval_forward(&self.inner, &input(x)?).value)
    }

    /// Probability of a counter-clockwise push.
    fn ccw_probability(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(network::action_forward(&self.inner, &input(x)?).prob)
    }

    fn __len__(&self) -> usize {
        SeparateNetWeights::len()
    }
}

/// Weights of the single network with value and policy heads.
#[pyclass(name = "SharedNet", from_py_object)]
#[derive(Clone)]
struct PySharedNet {
    inner: SharedNetWeights,
}

#[pymethods]
impl PySharedNet {
    #[new]
    #[pyo3(signature = (weights = None))]
    fn new(weights: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match weights {
            Some(w) => SharedNetWeights::from_flat(&w).map_err(err)?,
            None => SharedNetWeights::zeros(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self {
            inner: SharedNetWeights::random(&mut mrl::seed::rng(seed, "py.shared", 0)),
        }
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.to_flat()
    }

    /// Returns `(value, ccw_probability)`.
    fn forward(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let t = network::shared_forward(&self.inner, &input(x)?);
        Ok((t.value, t.prob))
    }

    /// Gradients of the value and of log π(q) with respect to every weight.
    fn gradients(&self, x: Vec<f64>, q: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let t = network::shared_forward(&self.inner, &input(x)?);
        Ok((
            network::value_gradient(&self.inner, &t).to_flat(),
            network::log_policy_gradient(&self.inner, &t, q).to_flat(),
        ))
    }

    fn __len__(&self) -> usize {
        SharedNetWeights::len()
    }
}

/// Applies one pulse to a single device and returns its new conductance.
#[pyfunction]
#[pyo3(signature = (g, voltage, duration, vth_set = mrl::device::NOMINAL_THRESHOLD, vth_reset = mrl::device::NOMINAL_THRESHOLD))]
fn apply_pulse(g: f64, voltage: f64, duration: f64, vth_set: f64, vth_reset: f64) -> f64 {
    let mut cell = DeviceCell::new(g, vth_set, vth_reset);
    cell.apply_pulse(voltage, duration, &DeviceParams::default());
    cell.g
}

/// A crossbar of differential device pairs, one pair per weight.
#[pyclass(name = "Crossbar")]
struct PyCrossbar {
    inner: Crossbar,
}

#[pymethods]
impl PyCrossbar {
    #[new]
    #[pyo3(signature = (rows, cols, variation = "ideal", seed = 0))]
    fn new(rows: usize, cols: usize, variation: &str, seed: u64) -> PyResult<Self> {
        let mode: VariationMode = parse(variation)?;
        let mut rng = mrl::seed::rng(seed, "py.crossbar", 0);
        Ok(Self {
            inner: Crossbar::new(rows, cols, DeviceParams::default(), mode, &mut rng),
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn read_weights(&self) -> Vec<f64> {
        self.inner.read_weights()
    }

    /// Programs exact targets; returns how many pairs saturated.
    fn write_exact(&mut self, weights: Vec<f64>) -> PyResult<usize> {
        self.inner.write_exact(&weights).map_err(err)
    }

    fn manhattan_update(&mut self, signs: Vec<i8>) -> PyResult<()> {
        self.inner.manhattan_update(&signs).map_err(err)
    }

    /// Returns `(programmed, below_floor, clipped, disturbed)`.
    fn variable_amplitude_update(&mut self, dw: Vec<f64>, eta: f64) -> PyResult<(usize, usize, usize, usize)> {
        let r = self.inner.variable_amplitude_update(&dw, eta).map_err(err)?;
        Ok((r.programmed, r.below_floor, r.clipped, r.disturbed))
    }

    fn dump(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner
            .dump(&mut out)
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        String::from_utf8(out).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Mean steps, updates per weight and efficiency of a list of trial lengths.
#[pyfunction]
fn compute_metrics(
    steps: Vec<usize>,
    pretrained_t2f: f64,
    updates_per_weight: f64,
) -> PyResult<(f64, f64, Option<f64>)> {
    let trials: Vec<TrialRecord> = steps
        .into_iter()
        .map(|s| TrialRecord {
            steps_survived: s,
            updates_applied: 0,
            success: s >= pendulum::MAX_TRIAL_STEPS,
            diverged: false,
        })
        .collect();
    let m = harness::compute_metrics(&trials, pretrained_t2f, updates_per_weight).map_err(err)?;
    Ok((m.mean_t2f, m.updates_per_weight, m.efficiency))
}

/// Agent population as `(index, seed_index, mass_pct, length_pct)` tuples.
#[pyfunction]
#[pyo3(signature = (scale = "desk", seed = 1))]
fn population(scale: &str, seed: u64) -> PyResult<Vec<(usize, usize, f64, f64)>> {
    Ok(harness::build_population(parse(scale)?, seed)
        .into_iter()
        .map(|a| (a.index, a.seed_index, a.mass_pct, a.length_pct))
        .collect())
}

/// Complete-information experiment: pre-training followed by re-training
/// settings over a population of agents.
#[pyclass(name = "Experiment", unsendable)]
struct PyExperiment {
    inner: Experiment,
}

#[pymethods]
impl PyExperiment {
    #[new]
    #[pyo3(signature = (config = None, seed = 1, agents = None))]
    fn new(config: Option<PyConfig>, seed: u64, agents: Option<usize>) -> PyResult<Self> {
        let mut inner = Experiment::new(config.map(|c| c.inner).unwrap_or_default(), seed).map_err(err)?;
        if let Some(n) = agents {
            inner.limit_agents(n);
        }
        Ok(Self { inner })
    }

    /// Pre-trains every seed and returns the mean inference t2f.
    fn pretrain(&mut self, py: Python<'_>) -> PyResult<f64> {
        let inner = &mut self.inner;
        py.detach(|| inner.pretrain()).map_err(err)?;
        Ok(self.inner.inference_t2f())
    }

    fn pretrained_weights(&self) -> Vec<PySeparateNet> {
        self.inner
            .pretrained()
            .iter()
            .map(|(w, _)| PySeparateNet { inner: w.clone() })
            .collect()
    }

    /// Re-trains every agent under one setting and returns
    /// `(mean_t2f, updates_per_weight, efficiency)`.
    #[pyo3(signature = (approach = "manhattan_pq", c = 50, variable_dr = false, variation = "ideal"))]
    fn run_setting(
        &self,
        py: Python<'_>,
        approach: &str,
        c: usize,
        variable_dr: bool,
        variation: &str,
    ) -> PyResult<(f64, f64, Option<f64>)> {
        let setting = Setting::new(parse::<Approach>(approach)?, c)
            .with_variable_dr(variable_dr)
            .with_variation(parse(variation)?);
        let inner = &self.inner;
        let m = py
            .detach(|| inner.run_setting(&setting).and_then(|o| inner.summarize(&o)))
            .map_err(err)?;
        Ok((m.mean_t2f, m.updates_per_weight, m.efficiency))
    }
}

/// Limited-information re-training with synchronous learners. Returns one
/// list of `(samples, updates, mean_t2f)` checkpoints per agent.
#[pyfunction]
#[pyo3(signature = (config = None, seed = 1, agents = 1, learners = 1, pretrained = true, write_path = "exact", variation = "ideal"))]
#[allow(clippy::too_many_arguments)]
fn run_limited(
    py: Python<'_>,
    config: Option<PyConfig>,
    seed: u64,
    agents: usize,
    learners: usize,
    pretrained: bool,
    write_path: &str,
    variation: &str,
) -> PyResult<Vec<Vec<(usize, usize, f64)>>> {
    let path = match write_path {
        "exact" => WritePath::Exact,
        "manhattan" => WritePath::Manhattan,
        "variable_amplitude" => WritePath::VariableAmplitude,
        other => return Err(PyValueError::new_err(format!("unknown write path `{other}`"))),
    };
    let mode: VariationMode = parse(variation)?;
    let config = config.map(|c| c.inner).unwrap_or_default();
    let runs = py
        .detach(|| harness::run_limited(&config, seed, agents, learners, pretrained, path, mode))
        .map_err(err)?;
    Ok(runs
        .into_iter()
        .map(|r| r.into_iter().map(|c| (c.samples, c.updates, c.mean_t2f)).collect())
        .collect())
}

#[pymodule]
fn memristor_rl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySeparateNet>()?;
    m.add_class::<PySharedNet>()?;
    m.add_class::<PyCrossbar>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(pendulum_step, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_state, m)?)?;
    m.add_function(wrap_pyfunction!(apply_pulse, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(population, m)?)?;
    m.add_function(wrap_pyfunction!(run_limited, m)?)?;
    m.add("MAX_TRIAL_STEPS", pendulum::MAX_TRIAL_STEPS)?;
    Ok(())
}
