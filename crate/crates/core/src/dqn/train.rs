use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::QModel;
use super::network::{Adam, DuelingNetwork, NetworkDims};
use super::normalize::Normalizer;
use super::replay::{PrioritizedBuffer, Transition};
use crate::agents::{rl_act, random_explore_act};
use crate::engine::GridEngine;
use crate::env::{is_critical, EnvConfig, Environment, EpisodeChronic};
use crate::error::{Error, Result};
use crate::grid::{Action, SystemState};
use crate::policy::{
    epsilon_greedy, epsilon_schedule, physics_guided_epsilon_greedy, ExploreConfig, Physics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exploration {
    /// Uniform legal action in the exploration branch.
    Canonical,
    /// Effective-set exploration in the exploration branch.
    Physics,
}

impl fmt::Display for Exploration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exploration::Canonical => "canonical",
            Exploration::Physics => "physics",
        })
    }
}

impl FromStr for Exploration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Exploration::Canonical),
            "physics" => Ok(Exploration::Physics),
            other => Err(Error::Config(format!("unknown exploration mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// How the training budget is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Elapsed time is charged per environment step and per gradient update,
    /// so runs are reproducible bit for bit.
    Virtual,
    /// Real elapsed time.
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied every `lr_decay_every` updates.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Gradient updates between hard target-network copies.
    pub target_sync: u64,
    pub buffer_capacity: usize,
    pub priority_alpha: f64,
    pub priority_beta_start: f64,
    pub priority_beta_end: f64,
    pub priority_eps: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps2: f64,
    /// Interactions over which epsilon decays and beta anneals.
    pub interaction_horizon: u64,
    pub budget_seconds: f64,
    /// Optional hard cap on agent interactions.
    pub max_interactions: Option<u64>,
    pub clock: ClockMode,
    pub seconds_per_env_step: f64,
    pub seconds_per_update: f64,
    pub seed: u64,
    /// Hidden width; defaults to the per-state feature count.
    pub hidden: Option<usize>,
    /// Random-policy states used to fit the input normalizer.
    pub warmup_states: usize,
    /// Training episodes between validation passes.
    pub validate_every: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            lr_decay: 0.95,
            lr_decay_every: 1 << 10,
            batch_size: 64,
            gamma: 0.99,
            target_sync: 1000,
            buffer_capacity: 10_000,
            priority_alpha: 0.6,
            priority_beta_start: 0.4,
            priority_beta_end: 1.0,
            priority_eps: 1e-3,
            eps_start: 0.99,
            eps_end: 0.05,
            eps2: 1.0,
            interaction_horizon: 26_000,
            budget_seconds: 600.0,
            max_interactions: None,
            clock: ClockMode::Virtual,
            seconds_per_env_step: 1e-3,
            seconds_per_update: 5e-3,
            seed: 0,
            hidden: None,
            warmup_states: 10_000,
            validate_every: 10,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    /// Named hyperparameter sets: `36bus` (the defaults), `118bus-a`
    /// (batch 32) and `118bus-b` (batch 32, rate 9e-4, 21k-interaction horizon).
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        match name {
            "36bus" | "default" => Ok(base),
            "118bus-a" => Ok(Self { batch_size: 32, ..base }),
            "118bus-b" => Ok(Self {
                batch_size: 32,
                learning_rate: 9e-4,
                interaction_horizon: 21_000,
                ..base
            }),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn explore_config(&self) -> ExploreConfig {
        ExploreConfig {
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_decay: self.interaction_horizon as f64 / 5.0,
            eps2: self.eps2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps2) || !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("exploration probabilities must lie in [0, 1]");
        }
        if self.budget_seconds < 0.0 {
            return bad("budget must be nonnegative");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, updates: u64) -> f64 {
        let periods = updates / self.lr_decay_every.max(1);
        self.learning_rate * self.lr_decay.powi(periods.min(i32::MAX as u64) as i32)
    }

    pub fn beta_at(&self, interactions: u64) -> f64 {
        let frac = (interactions as f64 / self.interaction_horizon.max(1) as f64).min(1.0);
        self.priority_beta_start + (self.priority_beta_end - self.priority_beta_start) * frac
    }
}

/// One row per finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub wall_clock_s: f64,
    pub interactions: u64,
    pub episode: usize,
    pub episode_length: usize,
    pub mean_reward: f64,
    pub epsilon: f64,
    pub env_steps: u64,
}

pub fn write_train_log(path: impl AsRef<Path>, rows: &[TrainLogRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    // header is emitted even for an empty log
    if rows.is_empty() {
        w.write_record([
            "wall_clock_s",
            "interactions",
            "episode",
            "episode_length",
            "mean_reward",
            "epsilon",
            "env_steps",
        ])
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters with the best validation survival time.
    pub model: QModel,
    pub log: Vec<TrainLogRow>,
    pub best_validation_st: Option<f64>,
    pub interactions: u64,
    pub updates: u64,
    pub env_steps: u64,
}

struct Clock {
    mode: ClockMode,
    start: Instant,
    per_step: f64,
    per_update: f64,
}

impl Clock {
    fn elapsed(&self, env_steps: u64, updates: u64) -> f64 {
        match self.mode {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Virtual => env_steps as f64 * self.per_step + updates as f64 * self.per_update,
        }
    }
}

/// Open transition from a critical state to the next critical state or terminal.
struct Pending {
    state: Vec<f32>,
    action: usize,
    ret: f64,
    discount: f64,
}

fn to_f32(x: &[f64]) -> Vec<f32> {
    x.iter().map(|&v| v as f32).collect()
}

/// Collects states visited by a random agent acting at critical states.
pub fn collect_random_states(
    engine: &Arc<GridEngine>,
    chronics: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SystemState>> {
    let mut env = Environment::new(Arc::clone(engine), env_cfg.clone())?;
    let mut out = Vec::with_capacity(count);
    let mut order: Vec<usize> = (0..chronics.len()).collect();
    'outer: while out.len() < count {
        order.shuffle(rng);
        for &i in &order {
            env.reset(Arc::clone(&chronics[i]))?;
            out.push(env.state().clone());
            while !env.is_done() && out.len() < count {
                let s = env.state();
                let a = if is_critical(s, env_cfg.eta) { random_explore_act(s, rng) } else { Action::DoNothing };
                env.step(a)?;
                out.push(env.state().clone());
            }
            if out.len() >= count {
                break 'outer;
            }
        }
    }
    Ok(out)
}

/// Greedy survival time averaged over the validation episodes.
fn validation_score(
    model: &QModel,
    engine: &Arc<GridEngine>,
    chronics: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
) -> Result<(f64, u64)> {
    let mut env = Environment::new(Arc::clone(engine), env_cfg.clone())?;
    let mut total = 0.0;
    let mut steps = 0;
    for c in chronics {
        let mut window = env.reset(Arc::clone(c))?;
        let mut st = c.horizon();
        while !env.is_done() {
            let a = rl_act(&window, model, engine, env_cfg.mu_line, env_cfg.eta)?;
            let out = env.step(a)?;
            steps += 1;
            if out.info.blackout {
                st = out.info.step;
            }
            window = out.next;
        }
        total += st as f64;
    }
    Ok((total / chronics.len().max(1) as f64, steps))
}

/// Trains a dueling Q-network with prioritized replay on `train_eps`,
/// acting only at critical states, and returns the parameters that scored
/// best on `val_eps` together with the per-episode training log.
pub fn train(
    engine: &Arc<GridEngine>,
    train_eps: &[Arc<EpisodeChronic>],
    val_eps: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    exploration: Exploration,
) -> Result<TrainResult> {
    cfg.validate()?;
    env_cfg.validate()?;
    if train_eps.is_empty() {
        return Err(Error::Config("no training episodes".into()));
    }
    let grid = engine.grid();
    let width = SystemState::feature_width(grid.generators().len(), grid.loads().len(), grid.n_lines());
    let dims = NetworkDims {
        n_inputs: width * env_cfg.kappa,
        hidden: cfg.hidden.unwrap_or(width),
        n_actions: grid.n_actions(),
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut net = DuelingNetwork::new(dims, &mut init_rng);

    if cfg.budget_seconds <= 0.0 || cfg.max_interactions == Some(0) {
        let model = QModel::new(net, Normalizer::identity(width), env_cfg.kappa)?;
        return Ok(TrainResult {
            model,
            log: Vec::new(),
            best_validation_st: None,
            interactions: 0,
            updates: 0,
            env_steps: 0,
        });
    }

    let clock = Clock {
        mode: cfg.clock,
        start: Instant::now(),
        per_step: cfg.seconds_per_env_step,
        per_update: cfg.seconds_per_update,
    };
    let warm = collect_random_states(engine, train_eps, env_cfg, cfg.warmup_states.max(1), &mut rng)?;
    let mut env_steps = warm.len() as u64;
    let normalizer = Normalizer::fit(&warm)?;
    drop(warm);

    let explore = cfg.explore_config();
    let mut target = net.clone();
    let mut adam = Adam::new(&net);
    let mut buffer = PrioritizedBuffer::new(cfg.buffer_capacity, cfg.priority_alpha, cfg.priority_eps);
    let mut env = Environment::new(Arc::clone(engine), env_cfg.clone())?;
    let n_lines = grid.n_lines();

    let mut log = Vec::new();
    let mut interactions = 0u64;
    let mut updates = 0u64;
    let mut episode = 0usize;
    let mut best: Option<(f64, DuelingNetwork)> = None;
    let mut order: Vec<usize> = (0..train_eps.len()).collect();
    let mut cursor = order.len();
    let budget_hit = |steps: u64, updates: u64, interactions: u64| {
        clock.elapsed(steps, updates) >= cfg.budget_seconds
            || cfg.max_interactions.is_some_and(|m| interactions >= m)
    };
    let mut x = DMatrix::zeros(dims.n_inputs, cfg.batch_size);
    let mut xn = DMatrix::zeros(dims.n_inputs, cfg.batch_size);

    'episodes: while !budget_hit(env_steps, updates, interactions) {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let chronic = Arc::clone(&train_eps[order[cursor]]);
        cursor += 1;
        let mut window = env.reset(chronic)?;
        let mut encoded = normalizer.encode(&window);
        let mut pending: Option<Pending> = None;
        let mut reward_sum = 0.0;
        let mut length = 0usize;
        let mut stop = false;

        while !env.is_done() {
            let state = window.latest();
            let action = if is_critical(state, env_cfg.eta) {
                let eps = epsilon_schedule(interactions, &explore);
                let q = net.forward(&encoded);
                let physics = Physics::new(engine, state, env_cfg.mu_line)?;
                let a = match exploration {
                    Exploration::Canonical => epsilon_greedy(state, &q, eps, &physics, &mut rng),
                    Exploration::Physics => {
                        physics_guided_epsilon_greedy(state, &q, eps, explore.eps2, &physics, &mut rng)
                    }
                };
                interactions += 1;
                pending = Some(Pending {
                    state: to_f32(&encoded),
                    action: a.encode(n_lines),
                    ret: 0.0,
                    discount: 1.0,
                });
                a
            } else {
                Action::DoNothing
            };

            let out = env.step(action)?;
            env_steps += 1;
            length += 1;
            reward_sum += out.reward;
            window = out.next;
            encoded = normalizer.encode(&window);

            if let Some(p) = pending.as_mut() {
                p.ret += p.discount * out.reward;
                p.discount *= cfg.gamma;
            }
            let closes = out.done || is_critical(window.latest(), env_cfg.eta);
            if closes {
                if let Some(p) = pending.take() {
                    buffer.push(Transition {
                        state: p.state,
                        action: p.action,
                        reward: p.ret,
                        next_state: to_f32(&encoded),
                        done: out.info.blackout,
                        discount: p.discount,
                    });
                    if buffer.len() >= cfg.batch_size {
                        learn_step(
                            &mut net, &target, &mut adam, &mut buffer, cfg, interactions, updates, &mut x, &mut xn,
                            &mut rng,
                        )?;
                        updates += 1;
                        if updates.is_multiple_of(cfg.target_sync.max(1)) {
                            target = net.clone();
                        }
                    }
                }
            }
            if budget_hit(env_steps, updates, interactions) {
                stop = true;
                break;
            }
        }
        if stop && length == 0 {
            break 'episodes;
        }
        episode += 1;
        log.push(TrainLogRow {
            wall_clock_s: clock.elapsed(env_steps, updates),
            interactions,
            episode,
            episode_length: length,
            mean_reward: reward_sum / length.max(1) as f64,
            epsilon: epsilon_schedule(interactions, &explore),
            env_steps,
        });
        let validate_now = stop || (cfg.validate_every > 0 && episode.is_multiple_of(cfg.validate_every));
        if validate_now && !val_eps.is_empty() {
            let model = QModel::new(net.clone(), normalizer.clone(), env_cfg.kappa)?;
            let (score, steps) = validation_score(&model, engine, val_eps, env_cfg)?;
            env_steps += steps;
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, net.clone()));
            }
        }
        if stop {
            break;
        }
    }

    let (best_st, params) = match best {
        Some((s, p)) => (Some(s), p),
        None => (None, net),
    };
    Ok(TrainResult {
        model: QModel::new(params, normalizer, env_cfg.kappa)?,
        log,
        best_validation_st: best_st,
        interactions,
        updates,
        env_steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn learn_step(
    net: &mut DuelingNetwork,
    target: &DuelingNetwork,
    adam: &mut Adam,
    buffer: &mut PrioritizedBuffer,
    cfg: &TrainConfig,
    interactions: u64,
    updates: u64,
    x: &mut DMatrix<f64>,
    xn: &mut DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let batch = buffer.sample(cfg.batch_size, cfg.beta_at(interactions), rng)?;
    let mut actions = Vec::with_capacity(cfg.batch_size);
    for (j, &i) in batch.indices.iter().enumerate() {
        let t = buffer.get(i);
        for (dst, &v) in x.column_mut(j).iter_mut().zip(&t.state) {
            *dst = v as f64;
        }
        for (dst, &v) in xn.column_mut(j).iter_mut().zip(&t.next_state) {
            *dst = v as f64;
        }
        actions.push(t.action);
    }
    let next_q = target.forward_batch(xn);
    let targets: Vec<f64> = batch
        .indices
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            let t = buffer.get(i);
            if t.done {
                t.reward
            } else {
                t.reward + t.discount * next_q.column(j).max()
            }
        })
        .collect();
    let lr = cfg.learning_rate_at(updates);
    let td = match cfg.optimizer {
        Optimizer::Sgd => net.sgd_step(x, &actions, &targets, &batch.weights, lr)?,
        Optimizer::Adam => {
            let (grad, td, _) = net.gradients(x, &actions, &targets, &batch.weights);
            if !grad.is_finite() {
                return Err(Error::NonFiniteGradient);
            }
            adam.step(net, &grad, lr);
            td.into_iter().map(f64::abs).collect()
        }
    };
    buffer.update_priorities(&batch.indices, &td);
    Ok(())
}
