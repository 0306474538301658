//! Python bindings: environments, datasets, the TD3+BC learner, metrics and
//! the experiment runner.

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use orl_core::agent::{agent_init, train_step, Td3bcConfig, TrainState};
use orl_core::datasets::{self, DatasetTier, NormalizationStats, OfflineDataset};
use orl_core::envs::{env_reset, env_step, EnvKind, EnvSpec, EnvState};
use orl_core::metrics::{self, evaluate_policy};
use orl_core::runner::{prepare_dataset, run_experiment as core_run_experiment, ExperimentConfig};
use orl_core::OrlError;

fn py_err(e: OrlError) -> PyErr {
    match e {
        OrlError::Io { .. } | OrlError::Format { .. } | OrlError::Version(_) => PyIOError::new_err(e.to_string()),
        OrlError::Numeric { .. } | OrlError::DegenerateMean(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A simulated environment with its action box and score anchors.
#[pyclass(name = "Env")]
struct PyEnv {
    spec: EnvSpec,
    state: Option<EnvState>,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            spec: EnvSpec::lookup(name).map_err(py_err)?,
            state: None,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.spec.name()
    }
    #[getter]
    fn obs_dim(&self) -> usize {
        self.spec.obs_dim
    }
    #[getter]
    fn act_dim(&self) -> usize {
        self.spec.act_dim
    }
    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon
    }
    #[getter]
    fn random_ref(&self) -> f64 {
        self.spec.random_ref
    }
    #[getter]
    fn expert_ref(&self) -> f64 {
        self.spec.expert_ref
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let st = env_reset(&self.spec, seed);
        let obs = st.observation.clone();
        self.state = Some(st);
        obs
    }

    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool)> {
        let st = self
            .state
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("call reset() before step()"))?;
        let r = env_step(&self.spec, st, &action).map_err(py_err)?;
        let out = (r.next_state.observation.clone(), r.reward, r.done);
        self.state = Some(r.next_state);
        Ok(out)
    }
}

/// An offline transition dataset.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: OfflineDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn generate(env: &str, tier: &str, size: usize, seed: u64) -> PyResult<Self> {
        let spec = EnvSpec::lookup(env).map_err(py_err)?;
        let tier: DatasetTier = tier.parse().map_err(py_err)?;
        Ok(Self {
            inner: datasets::generate_dataset(&spec, tier, size, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: datasets::load_dataset(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        datasets::save_dataset(&self.inner, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
    #[getter]
    fn env_name(&self) -> String {
        self.inner.env_name().to_string()
    }
    #[getter]
    fn tier(&self) -> String {
        self.inner.tier().to_string()
    }
    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }
    #[getter]
    fn act_dim(&self) -> usize {
        self.inner.act_dim()
    }

    /// Row `i` as `(state, action, reward, next_state, terminal)`.
    fn transition(&self, i: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64, Vec<f64>, bool)> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("index {i} out of range")));
        }
        let t = self.inner.transition(i);
        Ok((t.state, t.action, t.reward, t.next_state, t.terminal))
    }

    fn episode_returns(&self) -> PyResult<Vec<f64>> {
        let spec = EnvSpec::lookup(self.inner.env_name()).map_err(py_err)?;
        Ok(self.inner.episode_returns(spec.horizon))
    }

    /// Per-feature `(mu, sigma)` of the states.
    #[pyo3(signature = (epsilon = datasets::DEFAULT_NORM_EPSILON))]
    fn normalization(&self, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        let s = datasets::compute_normalization(&self.inner, epsilon);
        (s.mu, s.sigma)
    }

    #[staticmethod]
    fn mix(a: &PyDataset, b: &PyDataset, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: datasets::mix_datasets(&a.inner, &b.inner, seed).map_err(py_err)?,
        })
    }
}

/// A TD3+BC learner bound to one environment.
#[pyclass(name = "Agent")]
struct PyAgent {
    spec: EnvSpec,
    config: Td3bcConfig,
    state: TrainState,
    stats: Option<NormalizationStats>,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (env, seed = 0, alpha = 2.5, use_bc = true, use_q = true, use_norm = true, hidden = vec![64, 64], batch_size = 256))]
    #[allow(clippy::too_many_arguments)]
    fn new(env: &str, seed: u64, alpha: f64, use_bc: bool, use_q: bool, use_norm: bool, hidden: Vec<usize>, batch_size: usize) -> PyResult<Self> {
        let spec = EnvSpec::lookup(env).map_err(py_err)?;
        let config = Td3bcConfig {
            alpha,
            use_bc_term: use_bc,
            use_q_term: use_q,
            use_state_norm: use_norm,
            hidden_sizes: hidden,
            batch_size,
            ..Default::default()
        };
        let state = agent_init(&spec, &config, seed).map_err(py_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            spec,
            config,
            state,
            stats: None,
            rng,
        })
    }

    /// Runs `steps` training steps on `dataset`; returns the last critic loss.
    /// Normalization statistics are taken from the dataset passed in.
    fn train(&mut self, py: Python<'_>, dataset: &PyDataset, steps: u64) -> PyResult<f64> {
        let data = prepare_dataset(&dataset.inner, self.config.use_state_norm).map_err(py_err)?;
        self.stats = data.stats.clone();
        let (state, config, rng) = (&mut self.state, &self.config, &mut self.rng);
        py.detach(|| {
            let mut last = 0.0;
            for _ in 0..steps {
                last = train_step(state, &data.train, config, rng)?.critic_loss;
            }
            Ok(last)
        })
        .map_err(py_err)
    }

    fn act(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        self.state.policy(self.stats.clone()).act_raw(&observation).map_err(py_err)
    }

    /// Undiscounted returns of `episodes` rollouts with seeds `base_seed + i`.
    #[pyo3(signature = (episodes = 10, base_seed = 0))]
    fn evaluate(&self, episodes: usize, base_seed: u64) -> PyResult<Vec<f64>> {
        let mut policy = self.state.policy(self.stats.clone());
        let rec = evaluate_policy(&mut policy, &self.spec, episodes, base_seed, self.state.step_count).map_err(py_err)?;
        Ok(rec.episode_returns)
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.state.step_count
    }
    #[getter]
    fn actor_updates(&self) -> u64 {
        self.state.actor_updates
    }
}

#[pyfunction]
fn env_names() -> Vec<&'static str> {
    EnvKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn normalized_score(raw: f64, random_ref: f64, expert_ref: f64) -> PyResult<f64> {
    metrics::normalized_score(raw, random_ref, expert_ref).map_err(py_err)
}

#[pyfunction]
fn percent_difference(candidate: f64, reference: f64) -> PyResult<f64> {
    metrics::percent_difference(candidate, reference).map_err(py_err)
}

#[pyfunction]
fn compute_lambda(q_values: Vec<f64>, alpha: f64) -> f64 {
    orl_core::agent::compute_lambda(&q_values, alpha, Td3bcConfig::default().lambda_floor)
}

/// Runs an experiment from TOML text and returns `report.json` as a string.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
    let outcome = py.detach(|| core_run_experiment(&cfg)).map_err(py_err)?;
    Ok(serde_json::to_string_pretty(&outcome.report).expect("report serializes"))
}

#[pymodule]
fn orl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(env_names, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_score, m)?)?;
    m.add_function(wrap_pyfunction!(percent_difference, m)?)?;
    m.add_function(wrap_pyfunction!(compute_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
