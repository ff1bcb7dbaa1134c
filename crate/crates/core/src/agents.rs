//! Baseline and learned agents behind one `act` interface.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::dqn::QModel;
use crate::engine::GridEngine;
use crate::env::{is_critical, MdpState};
use crate::error::{Error, Result};
use crate::grid::{Action, SystemState};
use crate::policy::{q_guided_exploit, random_legal, Physics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    DoNothing,
    ReConnection,
    /// Uniform legal action at critical states (no learning).
    Random,
    RandomExploreRl,
    PhysicsGuidedRl,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::DoNothing => "do_nothing",
            AgentKind::ReConnection => "reconnection",
            AgentKind::Random => "random",
            AgentKind::RandomExploreRl => "random_explore_rl",
            AgentKind::PhysicsGuidedRl => "physics_guided_rl",
        }
    }

    pub fn needs_checkpoint(self) -> bool {
        matches!(self, AgentKind::RandomExploreRl | AgentKind::PhysicsGuidedRl)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "do_nothing" | "do-nothing" => AgentKind::DoNothing,
            "reconnection" => AgentKind::ReConnection,
            "random" => AgentKind::Random,
            "random_explore_rl" | "random-explore-rl" | "canonical" => AgentKind::RandomExploreRl,
            "physics_guided_rl" | "physics-guided-rl" | "physics" => AgentKind::PhysicsGuidedRl,
            other => return Err(Error::Config(format!("unknown agent {other:?}"))),
        })
    }
}

pub fn do_nothing_act(_state: &SystemState) -> Action {
    Action::DoNothing
}

/// Legal reconnection with the highest reward estimate, or do-nothing.
pub fn reconnection_act(state: &SystemState, engine: &GridEngine, mu_line: f64) -> Action {
    let Ok(physics) = Physics::new(engine, state, mu_line) else {
        return Action::DoNothing;
    };
    let mut best: Option<(Action, f64)> = None;
    for l in 0..state.n_lines() {
        let a = Action::Reconnect(l);
        if !state.is_legal(a) {
            continue;
        }
        if let Some(r) = physics.estimate(state, a) {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((a, r));
            }
        }
    }
    best.map_or(Action::DoNothing, |(a, _)| a)
}

pub fn random_explore_act<R: Rng + ?Sized>(state: &SystemState, rng: &mut R) -> Action {
    random_legal(state, rng)
}

/// Greedy deployment policy of a trained model: Q-guided exploitation at
/// critical states, do-nothing elsewhere.
pub fn rl_act(
    window: &MdpState,
    model: &QModel,
    engine: &GridEngine,
    mu_line: f64,
    eta: f64,
) -> Result<Action> {
    model.check_grid(engine.grid(), window.kappa())?;
    let state = window.latest();
    if !is_critical(state, eta) {
        return Ok(Action::DoNothing);
    }
    let q = model.q_values(window);
    let physics = Physics::new(engine, state, mu_line)?;
    Ok(q_guided_exploit(state, &q, &physics))
}

/// A configured agent. Only [`AgentKind::Random`] consumes randomness.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub model: Option<Arc<QModel>>,
    pub mu_line: f64,
    pub eta: f64,
}

impl Agent {
    pub fn baseline(kind: AgentKind, mu_line: f64, eta: f64) -> Result<Self> {
        if kind.needs_checkpoint() {
            return Err(Error::Config(format!("agent {kind} needs a checkpoint")));
        }
        Ok(Self { kind, model: None, mu_line, eta })
    }

    pub fn learned(kind: AgentKind, model: Arc<QModel>, mu_line: f64, eta: f64) -> Self {
        Self { kind, model: Some(model), mu_line, eta }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn act<R: Rng + ?Sized>(&self, window: &MdpState, engine: &GridEngine, rng: &mut R) -> Result<Action> {
        let state = window.latest();
        Ok(match self.kind {
            AgentKind::DoNothing => do_nothing_act(state),
            AgentKind::ReConnection => reconnection_act(state, engine, self.mu_line),
            AgentKind::Random => {
                if is_critical(state, self.eta) {
                    random_explore_act(state, rng)
                } else {
                    Action::DoNothing
                }
            }
            AgentKind::RandomExploreRl | AgentKind::PhysicsGuidedRl => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("agent {} has no checkpoint", self.kind)))?;
                rl_act(window, model, engine, self.mu_line, self.eta)?
            }
        })
    }
}
