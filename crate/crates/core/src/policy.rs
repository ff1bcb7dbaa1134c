//! Action selection: effective-set construction, physics-guided exploration,
//! Q-guided exploitation and the two epsilon-greedy wrappers around them.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::GridEngine;
use crate::error::Result;
use crate::grid::{legal_switches, Action, GridModel, SystemState};
use crate::sensitivity::{LodfMatrix, OutageStatus};

/// Number of highest-Q legal actions screened by the exploit rule.
pub const TOP_K: usize = 5;

/// Legal removals predicted to relieve the most loaded line without creating
/// a new overload, together with every legal reconnection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveSet {
    /// Most loaded in-service line at construction time.
    pub l_max: Option<usize>,
    /// Members in ascending action-index order.
    pub actions: Vec<Action>,
}

impl EffectiveSet {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn contains(&self, action: Action) -> bool {
        self.actions.contains(&action)
    }

    pub fn removals(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions.iter().filter_map(|a| match a {
            Action::Remove(l) => Some(*l),
            _ => None,
        })
    }
}

pub fn construct_effective_set(state: &SystemState, grid: &GridModel, lodf: &LodfMatrix) -> EffectiveSet {
    let n = state.n_lines();
    let l_max = state.most_loaded_line();
    let limit = |l: usize| grid.lines()[l].flow_limit;
    let mut actions = Vec::new();

    if let Some(m) = l_max {
        for k in 0..n {
            if k == m || !state.is_legal(Action::Remove(k)) {
                continue;
            }
            if lodf.status(k) != OutageStatus::Valid {
                continue;
            }
            let fk = state.flow[k];
            let col = lodf.values().column(k);
            let after_max = state.flow[m] + col[m] * fk;
            if after_max.abs() > limit(m) {
                continue;
            }
            let overloads = (0..n).any(|l| {
                l != m && l != k && state.line_status[l] && (state.flow[l] + col[l] * fk).abs() > limit(l)
            });
            if !overloads {
                actions.push(Action::Remove(k));
            }
        }
    }
    actions.extend((0..n).map(Action::Reconnect).filter(|&a| state.is_legal(a)));
    EffectiveSet { l_max, actions }
}

/// Physics context shared by the exploration and exploitation rules: the
/// cached solver, the LODF matrix for the current topology and the switching
/// cost weight.
#[derive(Debug, Clone)]
pub struct Physics<'a> {
    pub engine: &'a GridEngine,
    pub lodf: Arc<LodfMatrix>,
    pub mu_line: f64,
}

impl<'a> Physics<'a> {
    pub fn new(engine: &'a GridEngine, state: &SystemState, mu_line: f64) -> Result<Self> {
        let lodf = engine.lodf(&state.topology())?;
        Ok(Self { engine, lodf, mu_line })
    }

    /// Raw reward estimate, or `None` when the prediction is undefined
    /// (islanding removal or an unsolvable reconnection).
    pub fn estimate(&self, state: &SystemState, action: Action) -> Option<f64> {
        self.engine
            .estimate_reward(state, action, &self.lodf, self.mu_line)
            .ok()
            .map(|r| r.raw)
    }

    /// Candidate with the highest estimate, lowest index among ties.
    fn best_of(&self, state: &SystemState, candidates: &[Action]) -> Option<Action> {
        let mut best: Option<(Action, f64)> = None;
        let mut sorted = candidates.to_vec();
        sorted.sort_by_key(|a| a.encode(state.n_lines()));
        for a in sorted {
            if let Some(r) = self.estimate(state, a) {
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((a, r));
                }
            }
        }
        best.map(|(a, _)| a)
    }
}

/// Highest reward estimate over the effective set; do-nothing when it is empty.
pub fn physics_explore(state: &SystemState, physics: &Physics) -> Action {
    let set = construct_effective_set(state, physics.engine.grid(), &physics.lodf);
    physics
        .best_of(state, &set.actions)
        .unwrap_or(Action::DoNothing)
}

/// Top-[`TOP_K`] legal line switches by Q, re-ranked by reward estimate.
/// Falls back to do-nothing when no switch is legal or none can be estimated.
pub fn q_guided_exploit(state: &SystemState, q: &[f64], physics: &Physics) -> Action {
    let n = state.n_lines();
    let mut legal = legal_switches(state);
    // stable sort keeps ascending index among equal Q
    legal.sort_by(|a, b| q[b.encode(n)].total_cmp(&q[a.encode(n)]));
    legal.truncate(TOP_K);
    physics.best_of(state, &legal).unwrap_or(Action::DoNothing)
}

/// Uniform draw over the legal line switches of `state`, do-nothing when
/// no switch is legal.
pub fn random_legal<R: Rng + ?Sized>(state: &SystemState, rng: &mut R) -> Action {
    let legal = legal_switches(state);
    if legal.is_empty() {
        return Action::DoNothing;
    }
    legal[rng.random_range(0..legal.len())]
}

/// Canonical epsilon-greedy: uniform legal action with probability `eps1`,
/// Q-guided exploitation otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    state: &SystemState,
    q: &[f64],
    eps1: f64,
    physics: &Physics,
    rng: &mut R,
) -> Action {
    if rng.random::<f64>() < eps1 {
        random_legal(state, rng)
    } else {
        q_guided_exploit(state, q, physics)
    }
}

/// Physics-guided epsilon-greedy. Within the exploration branch, physics
/// exploration is chosen with probability `eps2` and a uniform legal action
/// otherwise. The inner coin is only drawn for `0 < eps2 < 1`, so `eps2 = 0`
/// consumes the random stream exactly like [`epsilon_greedy`].
pub fn physics_guided_epsilon_greedy<R: Rng + ?Sized>(
    state: &SystemState,
    q: &[f64],
    eps1: f64,
    eps2: f64,
    physics: &Physics,
    rng: &mut R,
) -> Action {
    if rng.random::<f64>() >= eps1 {
        return q_guided_exploit(state, q, physics);
    }
    let physics_branch = if eps2 >= 1.0 {
        true
    } else if eps2 <= 0.0 {
        false
    } else {
        rng.random::<f64>() < eps2
    };
    if physics_branch {
        physics_explore(state, physics)
    } else {
        random_legal(state, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    /// Decay constant of the exponential schedule, in interactions.
    pub eps_decay: f64,
    pub eps2: f64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self::with_horizon(26_000)
    }
}

impl ExploreConfig {
    /// Schedule that is within `exp(-5)` of `eps_end` after `horizon` interactions.
    pub fn with_horizon(horizon: u64) -> Self {
        Self {
            eps_start: 0.99,
            eps_end: 0.05,
            eps_decay: horizon as f64 / 5.0,
            eps2: 1.0,
        }
    }
}

pub fn epsilon_schedule(n: u64, cfg: &ExploreConfig) -> f64 {
    let decay = if cfg.eps_decay > 0.0 {
        (-(n as f64) / cfg.eps_decay).exp()
    } else {
        0.0
    };
    (cfg.eps_end + (cfg.eps_start - cfg.eps_end) * decay).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cases;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tri_state(limits: [f64; 3]) -> (GridEngine, SystemState) {
        let engine = GridEngine::new(cases::triangle(limits));
        let mut s = SystemState::zeros(1, 1, 3);
        s.gen_p = vec![1.0];
        s.load_p = vec![1.0];
        s.line_status = vec![true; 3];
        s.flow = vec![2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        s.current = s.flow.clone();
        s.rho = (0..3).map(|l| s.flow[l] / limits[l]).collect();
        (engine, s)
    }

    #[test]
    fn relieving_removal_is_effective() {
        let (engine, s) = tri_state([1.1, 1.0, 0.3]);
        let lodf = engine.lodf(&s.topology()).unwrap();
        let set = construct_effective_set(&s, engine.grid(), &lodf);
        assert_eq!(set.l_max, Some(2));
        assert_eq!(set.actions, vec![Action::Remove(1)]);
    }

    #[test]
    fn removal_creating_overload_is_dropped() {
        let (engine, s) = tri_state([0.9, 1.0, 0.3]);
        let lodf = engine.lodf(&s.topology()).unwrap();
        assert!(construct_effective_set(&s, engine.grid(), &lodf).is_empty());
    }

    #[test]
    fn legal_reconnection_always_included() {
        let (engine, mut s) = tri_state([2.0; 3]);
        s.line_status[1] = false;
        s.flow = vec![1.0, 0.0, 0.0];
        let lodf = engine.lodf(&s.topology()).unwrap();
        let set = construct_effective_set(&s, engine.grid(), &lodf);
        assert!(set.contains(Action::Reconnect(1)));
        s.cooldown_line[1] = 2;
        let set = construct_effective_set(&s, engine.grid(), &lodf);
        assert!(!set.contains(Action::Reconnect(1)));
    }

    #[test]
    fn explore_picks_singleton_and_falls_back() {
        let (engine, s) = tri_state([1.1, 1.0, 0.3]);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        assert_eq!(physics_explore(&s, &ph), Action::Remove(1));
        let (engine, s) = tri_state([0.9, 1.0, 0.3]);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        assert_eq!(physics_explore(&s, &ph), Action::DoNothing);
    }

    #[test]
    fn exploit_ties_go_to_lowest_index() {
        // identical parallel lines: every removal predicts the same reward
        let engine = GridEngine::new(cases::parallel(6));
        let mut s = SystemState::zeros(1, 1, 6);
        s.gen_p = vec![1.0];
        s.load_p = vec![1.0];
        s.line_status = vec![true; 6];
        s.flow = vec![1.0 / 6.0; 6];
        s.current = s.flow.clone();
        s.rho = s.flow.clone();
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        let mut q = vec![1.0; 13];
        q[0] = -10.0;
        let r0 = ph.estimate(&s, Action::Remove(0)).unwrap();
        let r3 = ph.estimate(&s, Action::Remove(3)).unwrap();
        assert_eq!(r0, r3);
        assert_eq!(q_guided_exploit(&s, &q, &ph), Action::Remove(0));
    }

    #[test]
    fn exploit_only_do_nothing_legal() {
        let (engine, mut s) = tri_state([1.1, 1.0, 0.3]);
        s.cooldown_line = vec![1; 3];
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        assert_eq!(q_guided_exploit(&s, &[0.0; 7], &ph), Action::DoNothing);
    }

    #[test]
    fn exploit_never_picks_bottom_two() {
        // seven parallel lines, two out: five removals and two reconnects
        let engine = GridEngine::new(cases::parallel(7));
        let mut s = SystemState::zeros(1, 1, 7);
        s.gen_p = vec![1.0];
        s.load_p = vec![1.0];
        s.line_status = vec![true, true, true, true, true, false, false];
        s.flow = vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0];
        s.current = s.flow.clone();
        s.rho = s.flow.iter().map(|f| f / engine.grid().lines()[0].current_limit).collect();
        assert_eq!(legal_switches(&s).len(), 7);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        // reconnects have the best estimates but the lowest Q
        let mut q = vec![0.0; 15];
        for (i, v) in [(0, 9.0), (1, 5.0), (2, 4.0), (3, 3.0), (4, 2.0), (5, 1.0)] {
            q[i] = v;
        }
        q[13] = -1.0;
        q[14] = -2.0;
        let a = q_guided_exploit(&s, &q, &ph);
        assert!(matches!(a, Action::Remove(_)));
        let best_reconnect = ph.estimate(&s, Action::Reconnect(5)).unwrap();
        assert!(best_reconnect > ph.estimate(&s, a).unwrap());
    }

    #[test]
    fn exploit_skips_do_nothing_when_switches_are_legal() {
        let (engine, s) = tri_state([1.1, 1.0, 0.3]);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        let q = [100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_ne!(q_guided_exploit(&s, &q, &ph), Action::DoNothing);
    }

    #[test]
    fn random_explore_draws_switches_only() {
        let (_, mut s) = tri_state([1.1, 1.0, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            assert!(matches!(random_legal(&s, &mut rng), Action::Remove(_)));
        }
        s.failure_cooldown = vec![4; 3];
        assert_eq!(random_legal(&s, &mut rng), Action::DoNothing);
    }

    #[test]
    fn schedule_values() {
        let cfg = ExploreConfig::default();
        assert_eq!(cfg.eps_decay, 5200.0);
        assert!((epsilon_schedule(0, &cfg) - 0.99).abs() < 1e-12);
        let e = epsilon_schedule(26_000, &cfg);
        assert!((e - (0.05 + 0.94 * (-5.0f64).exp())).abs() < 1e-12);
        assert!((e - 0.0563).abs() < 1e-4);
        assert!((epsilon_schedule(u64::MAX, &cfg) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn eps2_zero_matches_canonical() {
        let (engine, s) = tri_state([1.1, 1.0, 0.3]);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        let q = [0.1, 0.5, -0.2, 0.3, 0.0, 0.0, 0.0];
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = epsilon_greedy(&s, &q, 0.6, &ph, &mut r1);
            let b = physics_guided_epsilon_greedy(&s, &q, 0.6, 0.0, &ph, &mut r2);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn full_physics_branch() {
        let (engine, s) = tri_state([1.1, 1.0, 0.3]);
        let ph = Physics::new(&engine, &s, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let a = physics_guided_epsilon_greedy(&s, &[0.0; 7], 1.0, 1.0, &ph, &mut rng);
            assert_eq!(a, Action::Remove(1));
        }
    }
}
