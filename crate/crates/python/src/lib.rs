//! Python bindings for the gridrl simulator, sensitivity factors and agents.
//!
//! Actions cross the boundary as integer indices: 0 is do-nothing,
//! `1..=L` removes line `i-1` and `L+1..=2L` reconnects line `i-L-1`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gridrl::agents::{Agent, AgentKind};
use gridrl::config::{load_grid, stress_profile};
use gridrl::dqn::{load_model, train as train_model, write_train_log, ClockMode, Exploration, TrainConfig};
use gridrl::engine::GridEngine;
use gridrl::env::{is_critical, EnvConfig, Environment, EpisodeChronic, StepOutcome};
use gridrl::eval::{evaluate as evaluate_agent, generate_dir, load_chronics_dir, ChronicsSet, EvalReport};
use gridrl::policy::{construct_effective_set, Physics};
use gridrl::powerflow::InjectionVector;
use gridrl::{legal_actions, Action, Topology};

fn py_err(e: gridrl::Error) -> PyErr {
    match e {
        gridrl::Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn decode(index: usize, n_lines: usize) -> PyResult<Action> {
    Action::decode(index, n_lines)
        .ok_or_else(|| PyIndexError::new_err(format!("action index {index} outside 0..={}", 2 * n_lines)))
}

fn status_or_all(status: Option<Vec<bool>>, n: usize) -> PyResult<Vec<bool>> {
    let status = status.unwrap_or_else(|| vec![true; n]);
    if status.len() != n {
        return Err(PyValueError::new_err(format!("line_status has {} entries, grid has {n} lines", status.len())));
    }
    Ok(status)
}

/// A transmission grid with a topology-cached DC solver.
#[pyclass(module = "gridrl_py", frozen)]
pub struct Grid {
    name: String,
    engine: Arc<GridEngine>,
}

#[pymethods]
impl Grid {
    /// Loads a built-in case (`ieee14`, `ieee30`, ...) or a grid JSON file.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let grid = load_grid(spec).map_err(py_err)?;
        Ok(Self { name: spec.to_string(), engine: Arc::new(GridEngine::new(grid)) })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.engine.grid().n_buses()
    }

    #[getter]
    fn n_lines(&self) -> usize {
        self.engine.grid().n_lines()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.engine.grid().n_actions()
    }

    #[getter]
    fn flow_limits(&self) -> Vec<f64> {
        self.engine.grid().lines().iter().map(|l| l.flow_limit).collect()
    }

    #[getter]
    fn line_ends(&self) -> Vec<(usize, usize)> {
        let g = self.engine.grid();
        g.lines().iter().map(|l| (l.from_bus, l.to_bus)).collect()
    }

    #[getter]
    fn nominal_loads(&self) -> Vec<f64> {
        self.engine.grid().loads().iter().map(|l| l.nominal_p).collect()
    }

    #[getter]
    fn generator_pmax(&self) -> Vec<f64> {
        self.engine.grid().generators().iter().map(|g| g.pmax).collect()
    }

    /// DC line flows in MW for the given generator and load set-points.
    #[pyo3(signature = (gen_p, load_p, line_status=None))]
    fn dc_flows(&self, gen_p: Vec<f64>, load_p: Vec<f64>, line_status: Option<Vec<bool>>) -> PyResult<Vec<f64>> {
        let g = self.engine.grid();
        if gen_p.len() != g.generators().len() || load_p.len() != g.loads().len() {
            return Err(PyValueError::new_err("set-point lengths do not match the grid"));
        }
        let status = status_or_all(line_status, g.n_lines())?;
        let inj = InjectionVector::from_setpoints(g, &gen_p, &load_p);
        let (flow, _) = self.engine.flows(&inj, &Topology::from_status(&status)).map_err(py_err)?;
        Ok(flow)
    }

    /// LODF matrix as nested lists, row = monitored line, column = outage.
    /// Columns of islanding or out-of-service outages are `None`.
    #[pyo3(signature = (line_status=None))]
    fn lodf(&self, line_status: Option<Vec<bool>>) -> PyResult<Vec<Vec<Option<f64>>>> {
        let n = self.engine.grid().n_lines();
        let status = status_or_all(line_status, n)?;
        let m = self.engine.lodf(&Topology::from_status(&status)).map_err(py_err)?;
        Ok((0..n).map(|l| (0..n).map(|k| m.get(l, k)).collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Grid({:?}, buses={}, lines={})", self.name, self.n_buses(), self.n_lines())
    }
}

fn outcome_dict<'py>(py: Python<'py>, out: &StepOutcome, n_lines: usize) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("reward", out.reward)?;
    d.set_item("raw_reward", out.raw_reward)?;
    d.set_item("done", out.done)?;
    d.set_item("step", out.info.step)?;
    d.set_item("blackout", out.info.blackout)?;
    d.set_item("tripped_lines", out.info.tripped_lines.clone())?;
    d.set_item("critical", out.info.critical)?;
    d.set_item("illegal_action", out.info.illegal_action)?;
    d.set_item("applied_action", out.info.applied_action.encode(n_lines))?;
    d.set_item("cascade_iterations", out.info.cascade_iterations)?;
    Ok(d)
}

/// One episode of the line-switching environment over a chronics directory.
#[pyclass(module = "gridrl_py")]
pub struct Env {
    grid: Py<Grid>,
    env: Environment,
    chronics: ChronicsSet,
}

#[pymethods]
impl Env {
    #[new]
    fn new(grid: Py<Grid>, chronics_dir: PathBuf) -> PyResult<Self> {
        let engine = Arc::clone(&grid.get().engine);
        let chronics = load_chronics_dir(&chronics_dir, engine.grid()).map_err(py_err)?;
        let env = Environment::new(engine, EnvConfig::default()).map_err(py_err)?;
        Ok(Self { grid, env, chronics })
    }

    /// Episode ids in the directory, sorted.
    fn episode_ids(&self) -> Vec<String> {
        self.chronics.episodes.keys().cloned().collect()
    }

    /// Episode ids of one split: `train`, `validation` or `test`.
    fn split(&self, name: &str) -> PyResult<Vec<String>> {
        let s = &self.chronics.manifest.split;
        match name {
            "train" => Ok(s.train.clone()),
            "validation" => Ok(s.validation.clone()),
            "test" => Ok(s.test.clone()),
            _ => Err(PyValueError::new_err(format!("unknown split {name:?}"))),
        }
    }

    /// Starts `episode` (default: the first id) and returns the state dict.
    #[pyo3(signature = (episode=None))]
    fn reset<'py>(&mut self, py: Python<'py>, episode: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let chronic: Arc<EpisodeChronic> = match episode {
            Some(id) => self.chronics.episodes.get(id).cloned(),
            None => self.chronics.episodes.values().next().cloned(),
        }
        .ok_or_else(|| PyValueError::new_err(format!("no episode {episode:?}")))?;
        self.env.reset(chronic).map_err(py_err)?;
        self.state(py)
    }

    /// Applies an action index and returns the outcome dict.
    fn step<'py>(&mut self, py: Python<'py>, action: usize) -> PyResult<Bound<'py, PyDict>> {
        if self.env.window().is_none() {
            return Err(PyRuntimeError::new_err("call reset() first"));
        }
        if self.env.is_done() {
            return Err(PyRuntimeError::new_err("episode is over"));
        }
        let n = self.env.engine().grid().n_lines();
        let a = decode(action, n)?;
        let out = self.env.step(a).map_err(py_err)?;
        outcome_dict(py, &out, n)
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.env.state();
        let d = PyDict::new(py);
        d.set_item("step", s.step)?;
        d.set_item("flow", s.flow.clone())?;
        d.set_item("rho", s.rho.clone())?;
        d.set_item("line_status", s.line_status.clone())?;
        d.set_item("gen_p", s.gen_p.clone())?;
        d.set_item("load_p", s.load_p.clone())?;
        d.set_item("cooldown_line", s.cooldown_line.clone())?;
        d.set_item("failure_cooldown", s.failure_cooldown.clone())?;
        d.set_item("max_rho", s.max_rho())?;
        d.set_item("critical", is_critical(s, self.env.config().eta))?;
        Ok(d)
    }

    #[getter]
    fn done(&self) -> bool {
        self.env.is_done()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.env.horizon()
    }

    #[getter]
    fn grid(&self, py: Python<'_>) -> Py<Grid> {
        self.grid.clone_ref(py)
    }

    /// Legal action indices in the current state, do-nothing first.
    fn legal_actions(&self) -> Vec<usize> {
        let n = self.env.engine().grid().n_lines();
        legal_actions(self.env.state()).into_iter().map(|a| a.encode(n)).collect()
    }

    /// Sensitivity-filtered candidate switches in the current state.
    fn effective_set(&self) -> PyResult<Vec<usize>> {
        let engine = self.env.engine();
        let state = self.env.state();
        let lodf = engine.lodf(&state.topology()).map_err(py_err)?;
        let set = construct_effective_set(state, engine.grid(), &lodf);
        Ok(set.actions.into_iter().map(|a| a.encode(engine.grid().n_lines())).collect())
    }

    /// Predicted raw reward of an action, `None` when undefined.
    fn estimate_reward(&self, action: usize) -> PyResult<Option<f64>> {
        let engine = self.env.engine();
        let state = self.env.state();
        let a = decode(action, engine.grid().n_lines())?;
        let physics = Physics::new(engine, state, self.env.config().mu_line).map_err(py_err)?;
        Ok(physics.estimate(state, a))
    }
}

/// Generates synthetic chronics into `out` and returns the split sizes.
#[pyfunction]
#[pyo3(signature = (grid, out, episodes=None, horizon=None, test_per_month=2, validation=12, seed=0))]
#[allow(clippy::too_many_arguments)]
fn generate_chronics<'py>(
    py: Python<'py>,
    grid: &Grid,
    out: PathBuf,
    episodes: Option<usize>,
    horizon: Option<usize>,
    test_per_month: usize,
    validation: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = stress_profile();
    if let Some(n) = episodes {
        cfg.n_episodes = n;
    }
    if let Some(t) = horizon {
        cfg.horizon = t;
    }
    let engine = Arc::clone(&grid.engine);
    let name = grid.name.clone();
    let m = py
        .detach(|| generate_dir(&out, &name, engine.grid(), &cfg, test_per_month, validation, seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("episodes", m.episodes.len())?;
    d.set_item("train", m.split.train.len())?;
    d.set_item("validation", m.split.validation.len())?;
    d.set_item("test", m.split.test.len())?;
    Ok(d)
}

/// Trains a Q-network and writes `checkpoint.json` and `train_log.csv` to `out`.
#[pyfunction]
#[pyo3(signature = (grid, chronics_dir, out, exploration="physics", budget_seconds=60.0, seed=0, wall_clock=false))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    grid: &Grid,
    chronics_dir: PathBuf,
    out: PathBuf,
    exploration: &str,
    budget_seconds: f64,
    seed: u64,
    wall_clock: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let exploration = match exploration {
        "physics" => Exploration::Physics,
        "canonical" => Exploration::Canonical,
        other => return Err(PyValueError::new_err(format!("unknown exploration {other:?}"))),
    };
    let cfg = TrainConfig {
        seed,
        budget_seconds,
        clock: if wall_clock { ClockMode::Wall } else { ClockMode::Virtual },
        ..TrainConfig::default()
    };
    let engine = Arc::clone(&grid.engine);
    let result = py
        .detach(|| -> gridrl::Result<_> {
            let set = load_chronics_dir(&chronics_dir, engine.grid())?;
            let result = train_model(&engine, &set.train()?, &set.validation()?, &EnvConfig::default(), &cfg, exploration)?;
            std::fs::create_dir_all(&out).map_err(|e| gridrl::Error::io(&out, e))?;
            result.model.to_checkpoint(engine.grid()).save(out.join("checkpoint.json"))?;
            write_train_log(out.join("train_log.csv"), &result.log)?;
            Ok(result)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("interactions", result.interactions)?;
    d.set_item("updates", result.updates)?;
    d.set_item("episodes", result.log.len())?;
    d.set_item("best_validation_st", result.best_validation_st)?;
    d.set_item("checkpoint", out.join("checkpoint.json"))?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("agent", &r.agent)?;
    d.set_item("avg_survival_time", r.avg_survival_time)?;
    d.set_item("pct_do_nothing", r.pct_do_nothing)?;
    d.set_item("pct_reconnect", r.pct_reconnect)?;
    d.set_item("pct_removals", r.pct_removals)?;
    d.set_item("avg_action_diversity", r.avg_action_diversity)?;
    d.set_item("avg_action_diversity_pct", r.avg_action_diversity_pct)?;
    let st: Vec<usize> = r.episodes.iter().map(|e| e.survival_time).collect();
    d.set_item("survival_times", st)?;
    Ok(d)
}

/// Evaluates an agent on one split. Learned agents need `checkpoint`.
#[pyfunction]
#[pyo3(signature = (grid, chronics_dir, agent="do_nothing", checkpoint=None, split="test", seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    grid: &Grid,
    chronics_dir: PathBuf,
    agent: &str,
    checkpoint: Option<PathBuf>,
    split: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: AgentKind = agent.parse().map_err(py_err)?;
    let env_cfg = EnvConfig::default();
    let engine = Arc::clone(&grid.engine);
    let split = split.to_string();
    let report = py
        .detach(|| -> gridrl::Result<_> {
            let agent = if kind.needs_checkpoint() {
                let path = checkpoint
                    .ok_or_else(|| gridrl::Error::Config(format!("agent {kind} needs a checkpoint")))?;
                let model = load_model(&path, engine.grid(), env_cfg.kappa)?;
                Agent::learned(kind, Arc::new(model), env_cfg.mu_line, env_cfg.eta)
            } else {
                Agent::baseline(kind, env_cfg.mu_line, env_cfg.eta)?
            };
            let set = load_chronics_dir(&chronics_dir, engine.grid())?;
            let eps = match split.as_str() {
                "train" => set.train()?,
                "validation" => set.validation()?,
                "test" => set.test()?,
                other => return Err(gridrl::Error::Config(format!("unknown split {other:?}"))),
            };
            evaluate_agent(&agent, &engine, &eps, &env_cfg, seed)
        })
        .map_err(py_err)?;
    report_dict(py, &report)
}

#[pymodule]
mod gridrl_py {
    #[pymodule_export]
    use super::{evaluate, generate_chronics, train, Env, Grid};
}
