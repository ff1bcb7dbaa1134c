use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chronics::EpisodeChronic;
use super::reward::{normalize_reward, raw_reward};
use crate::engine::GridEngine;
use crate::error::{Error, Result};
use crate::grid::{Action, SystemState, Topology};
use crate::powerflow::{balance_generation, InjectionVector};

/// Environment parameters. Keys double as config-file field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Observation window length.
    pub kappa: usize,
    /// Critical-state threshold on max rho.
    pub eta: f64,
    /// Weight of the switching cost in the reward.
    pub mu_line: f64,
    /// Cooldown after a deliberate switch, in steps.
    pub tau_d: u32,
    /// Cooldown after an overload trip, in steps.
    pub tau_f: u32,
    /// Consecutive overloaded steps before a line trips.
    pub tau_over: u32,
    /// Rho at or above which a line trips immediately.
    pub rho_hard: f64,
    /// Raw reward added on blackout; `None` means `-L`.
    pub failure_penalty: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kappa: 6,
            eta: 0.95,
            mu_line: 0.0,
            tau_d: 3,
            tau_f: 12,
            tau_over: 3,
            rho_hard: 2.0,
            failure_penalty: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.kappa < 1 {
            return bad("kappa must be >= 1");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if self.tau_d < 1 || self.tau_f <= self.tau_d {
            return bad("require tau_f > tau_d >= 1");
        }
        if !(self.rho_hard > 1.0) {
            return bad("rho_hard must exceed 1");
        }
        if self.tau_over < 1 {
            return bad("tau_over must be >= 1");
        }
        Ok(())
    }
}

/// The last `kappa` system states, oldest first; zero-padded early in an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    window: VecDeque<SystemState>,
    filled: usize,
}

impl MdpState {
    fn new(kappa: usize, padding: SystemState, first: SystemState) -> Self {
        let mut window: VecDeque<SystemState> = std::iter::repeat_n(padding, kappa - 1).collect();
        window.push_back(first);
        Self { window, filled: 1 }
    }

    fn push(&mut self, state: SystemState) {
        self.window.pop_front();
        self.window.push_back(state);
        self.filled = (self.filled + 1).min(self.window.len());
    }

    pub fn kappa(&self) -> usize {
        self.window.len()
    }

    pub fn latest(&self) -> &SystemState {
        self.window.back().expect("window is never empty")
    }

    pub fn states(&self) -> impl Iterator<Item = &SystemState> {
        self.window.iter()
    }

    /// Whether slot `i` (0 = oldest) is padding rather than an observed state.
    pub fn is_padding(&self, i: usize) -> bool {
        i < self.window.len() - self.filled
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub blackout: bool,
    pub tripped_lines: Vec<usize>,
    /// Whether the resulting state is critical.
    pub critical: bool,
    /// The requested action was illegal and replaced by do-nothing.
    pub illegal_action: bool,
    pub applied_action: Action,
    pub cascade_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: MdpState,
    /// Normalized reward in [-1, 1].
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// True iff the maximum in-service risk margin reaches `eta`.
pub fn is_critical(state: &SystemState, eta: f64) -> bool {
    state.max_rho() >= eta
}

/// Step index of the terminal blackout, or `horizon` if the episode completed.
pub fn survival_time(trace: &[StepOutcome], horizon: usize) -> usize {
    match trace.last() {
        Some(o) if o.info.blackout => o.info.step,
        _ => horizon,
    }
}

/// One single-threaded episode runner. Step order per transition n -> n+1:
/// cooldown decrement, legality check and switch, injection update and solve,
/// overload cascade, blackout check, reward, window update.
#[derive(Debug)]
pub struct Environment {
    engine: Arc<GridEngine>,
    config: EnvConfig,
    chronic: Option<Arc<EpisodeChronic>>,
    state: SystemState,
    window: Option<MdpState>,
    done: bool,
}

impl Environment {
    pub fn new(engine: Arc<GridEngine>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let g = engine.grid();
        let state = SystemState::zeros(g.generators().len(), g.loads().len(), g.n_lines());
        Ok(Self {
            engine,
            config,
            chronic: None,
            state,
            window: None,
            done: true,
        })
    }

    pub fn engine(&self) -> &Arc<GridEngine> {
        &self.engine
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn window(&self) -> Option<&MdpState> {
        self.window.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn horizon(&self) -> usize {
        self.chronic.as_ref().map_or(0, |c| c.horizon())
    }

    pub fn reset(&mut self, chronic: Arc<EpisodeChronic>) -> Result<MdpState> {
        let n = self.engine.grid().n_lines();
        self.reset_with_topology(chronic, Topology::all_in_service(n))
    }

    /// Starts an episode from `topology`; fails if step 0 cannot be solved.
    pub fn reset_with_topology(
        &mut self,
        chronic: Arc<EpisodeChronic>,
        topology: Topology,
    ) -> Result<MdpState> {
        let grid = self.engine.grid();
        chronic.check(grid)?;
        if topology.len() != grid.n_lines() {
            return Err(Error::DimensionMismatch("initial topology length".into()));
        }
        let (gen_p, load_p) = self.injections(&chronic, 0);
        let inj = InjectionVector::from_setpoints(grid, &gen_p, &load_p);
        let (flow, rho) = self.engine.flows(&inj, &topology)?;
        let n = grid.n_lines();
        let state = SystemState {
            step: 0,
            gen_p,
            load_p,
            current: flow.iter().map(|f| f.abs()).collect(),
            overflow_steps: rho.iter().map(|&r| u32::from(r >= 1.0)).collect(),
            flow,
            rho,
            line_status: topology.in_service,
            cooldown_line: vec![0; n],
            failure_cooldown: vec![0; n],
        };
        let padding = SystemState::zeros(grid.generators().len(), grid.loads().len(), n);
        let window = MdpState::new(self.config.kappa, padding, state.clone());
        self.state = state;
        self.window = Some(window.clone());
        self.chronic = Some(chronic);
        self.done = self.horizon() <= 1;
        Ok(window)
    }

    fn injections(&self, chronic: &EpisodeChronic, row: usize) -> (Vec<f64>, Vec<f64>) {
        let load_p = chronic.load_p[row].clone();
        let gen_p = balance_generation(self.engine.grid(), &chronic.gen_p[row], &load_p);
        (gen_p, load_p)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let chronic = Arc::clone(self.chronic.as_ref().expect("reset before step"));
        let engine = Arc::clone(&self.engine);
        let grid = engine.grid();
        let cfg = &self.config;
        let n_lines = grid.n_lines();
        let mut s = self.state.clone();
        s.step += 1;

        // (1) cooldowns tick down before legality is evaluated
        for l in 0..n_lines {
            s.cooldown_line[l] = s.cooldown_line[l].saturating_sub(1);
            s.failure_cooldown[l] = s.failure_cooldown[l].saturating_sub(1);
        }

        // (2) switch
        let legal = s.is_legal(action);
        let applied = if legal { action } else { Action::DoNothing };
        match applied {
            Action::Remove(l) => {
                s.line_status[l] = false;
                s.cooldown_line[l] = cfg.tau_d;
            }
            Action::Reconnect(l) => {
                s.line_status[l] = true;
                s.cooldown_line[l] = cfg.tau_d;
            }
            Action::DoNothing => {}
        }

        // (3) new set-points
        let (gen_p, load_p) = self.injections(&chronic, s.step);
        let inj = InjectionVector::from_setpoints(grid, &gen_p, &load_p);
        s.gen_p = gen_p;
        s.load_p = load_p;

        // (4) cascade
        let mut tripped = Vec::new();
        let mut iterations = 0;
        let mut blackout = false;
        let mut last_rho = s.rho.clone();
        match engine.flows(&inj, &Topology::from_status(&s.line_status)) {
            Err(_) => blackout = true,
            Ok((flow, rho)) => {
                for l in 0..n_lines {
                    s.overflow_steps[l] = if s.line_status[l] && rho[l] >= 1.0 {
                        s.overflow_steps[l] + 1
                    } else {
                        0
                    };
                }
                set_flows(&mut s, flow, rho);
                last_rho = s.rho.clone();
                loop {
                    let trips: Vec<usize> = (0..n_lines)
                        .filter(|&l| {
                            s.line_status[l]
                                && (s.rho[l] >= cfg.rho_hard || s.overflow_steps[l] >= cfg.tau_over)
                        })
                        .collect();
                    if trips.is_empty() {
                        break;
                    }
                    iterations += 1;
                    for &l in &trips {
                        s.line_status[l] = false;
                        s.failure_cooldown[l] = cfg.tau_f;
                        s.overflow_steps[l] = 0;
                    }
                    tripped.extend(trips);
                    match engine.flows(&inj, &Topology::from_status(&s.line_status)) {
                        Err(_) => {
                            blackout = true;
                            break;
                        }
                        Ok((flow, rho)) => {
                            for l in 0..n_lines {
                                if !s.line_status[l] || rho[l] < 1.0 {
                                    s.overflow_steps[l] = 0;
                                } else if s.overflow_steps[l] == 0 {
                                    s.overflow_steps[l] = 1;
                                }
                            }
                            set_flows(&mut s, flow, rho);
                            last_rho = s.rho.clone();
                        }
                    }
                }
            }
        }

        // (5) + (6)
        let mut raw = raw_reward(&last_rho, applied, cfg.mu_line, grid);
        if blackout {
            raw += cfg.failure_penalty.unwrap_or(-(n_lines as f64));
            for l in 0..n_lines {
                if !s.line_status[l] {
                    s.flow[l] = 0.0;
                    s.current[l] = 0.0;
                    s.rho[l] = 0.0;
                }
            }
        }
        let reward = normalize_reward(raw, n_lines);
        let done = blackout || s.step + 1 >= chronic.horizon();

        // (7)
        let window = self.window.as_mut().expect("reset before step");
        window.push(s.clone());
        let next = window.clone();
        let info = StepInfo {
            step: s.step,
            blackout,
            tripped_lines: tripped,
            critical: is_critical(&s, cfg.eta),
            illegal_action: !legal,
            applied_action: applied,
            cascade_iterations: iterations,
        };
        self.state = s;
        self.done = done;
        Ok(StepOutcome {
            next,
            reward,
            raw_reward: raw,
            done,
            info,
        })
    }
}

fn set_flows(s: &mut SystemState, flow: Vec<f64>, rho: Vec<f64>) {
    s.current = flow.iter().map(|f| f.abs()).collect();
    s.flow = flow;
    s.rho = rho;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cases;

    fn tri_env(limits: [f64; 3], kappa: usize, load: &[f64]) -> (Environment, Arc<EpisodeChronic>) {
        let engine = Arc::new(GridEngine::new(cases::triangle(limits)));
        let cfg = EnvConfig {
            kappa,
            ..EnvConfig::default()
        };
        let chronic = Arc::new(EpisodeChronic {
            id: "t".into(),
            month: None,
            gen_p: load.iter().map(|&d| vec![d]).collect(),
            load_p: load.iter().map(|&d| vec![d]).collect(),
        });
        (Environment::new(engine, cfg).unwrap(), chronic)
    }

    #[test]
    fn reset_pads_window() {
        let (mut env, c) = tri_env([1.1, 1.0, 1.0], 3, &[1.0; 5]);
        let w = env.reset(c).unwrap();
        assert_eq!(w.kappa(), 3);
        assert!(w.is_padding(0) && w.is_padding(1) && !w.is_padding(2));
        assert!((w.latest().flow[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(w.states().next().unwrap().flow, vec![0.0; 3]);
    }

    #[test]
    fn kappa_one_window_is_current_state() {
        let (mut env, c) = tri_env([1.1, 1.0, 1.0], 1, &[1.0; 5]);
        let w = env.reset(c).unwrap();
        assert_eq!(w.kappa(), 1);
        assert_eq!(w.latest(), env.state());
    }

    #[test]
    fn islanded_load_at_reset_is_an_error() {
        let (mut env, c) = tri_env([1.0; 3], 2, &[1.0; 3]);
        let cut = Topology::from_status(&[false, true, false]);
        assert!(matches!(env.reset_with_topology(c, cut), Err(Error::SingularTopology(_))));
    }

    #[test]
    fn do_nothing_fixed_point() {
        let (mut env, c) = tri_env([1.1, 1.0, 1.0], 2, &[1.0; 4]);
        env.reset(c).unwrap();
        let before = env.state().rho.clone();
        let out = env.step(Action::DoNothing).unwrap();
        assert!(!out.done);
        assert_eq!(out.next.latest().rho, before);
    }

    #[test]
    fn reconnect_waits_for_cooldown() {
        let (mut env, c) = tri_env([2.0, 2.0, 2.0], 2, &[1.0; 10]);
        env.reset(c).unwrap();
        let out = env.step(Action::Remove(0)).unwrap();
        assert_eq!(out.info.applied_action, Action::Remove(0));
        assert_eq!(env.state().cooldown_line[0], 3);
        // tau_d - 1 = 2 further steps are blocked
        for _ in 0..2 {
            let out = env.step(Action::Reconnect(0)).unwrap();
            assert!(out.info.illegal_action);
            assert!(!env.state().line_status[0]);
        }
        let out = env.step(Action::Reconnect(0)).unwrap();
        assert!(!out.info.illegal_action);
        assert!(env.state().line_status[0]);
    }

    #[test]
    fn persistent_overload_trips_after_tau_over() {
        // 1-3 limit 0.3 with 1/3 MW flowing: rho = 1.11 every step; no hard trip
        let (mut env, c) = tri_env([5.0, 0.3, 5.0], 2, &[1.0; 10]);
        env.reset(c).unwrap();
        assert_eq!(env.state().overflow_steps[1], 1);
        let o1 = env.step(Action::DoNothing).unwrap();
        assert!(o1.info.tripped_lines.is_empty());
        assert_eq!(env.state().overflow_steps[1], 2);
        let o2 = env.step(Action::DoNothing).unwrap();
        assert_eq!(o2.info.tripped_lines, vec![1]);
        assert_eq!(o2.info.step, 2);
        assert_eq!(env.state().failure_cooldown[1], 12);
        assert!(!env.state().line_status[1]);
        assert!(!o2.done);
        assert_eq!(o2.info.cascade_iterations, 1);
    }

    #[test]
    fn hard_overload_trips_immediately_and_can_black_out() {
        // 1-2 limit 0.3 carries 2/3 (rho 2.2 >= 2): trips, then everything rides
        // 1-3-2 (1 MW) against limit 0.4 -> hard trip -> load islanded
        let (mut env, c) = tri_env([0.3, 0.4, 5.0], 2, &[1.0; 10]);
        env.reset(c).unwrap();
        let out = env.step(Action::DoNothing).unwrap();
        assert!(out.done && out.info.blackout);
        assert_eq!(out.info.tripped_lines, vec![0, 1]);
        assert_eq!(out.reward, -1.0);
        assert!(matches!(env.step(Action::DoNothing), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn episode_runs_to_horizon() {
        let (mut env, c) = tri_env([2.0; 3], 2, &[1.0; 4]);
        env.reset(c).unwrap();
        let mut trace = Vec::new();
        loop {
            let o = env.step(Action::DoNothing).unwrap();
            let done = o.done;
            trace.push(o);
            if done {
                break;
            }
        }
        assert_eq!(trace.len(), 3);
        assert_eq!(survival_time(&trace, 4), 4);
    }

    #[test]
    fn survival_time_cases() {
        let (mut env, c) = tri_env([0.3, 0.4, 5.0], 2, &[1.0; 100]);
        env.reset(c).unwrap();
        let o = env.step(Action::DoNothing).unwrap();
        assert_eq!(survival_time(std::slice::from_ref(&o), 100), 1);
        let mut late = o.clone();
        late.info.step = 37;
        assert_eq!(survival_time(&[late], 100), 37);
        let mut first = o;
        first.info.step = 0;
        assert_eq!(survival_time(&[first], 100), 0);
        assert_eq!(survival_time(&[], 100), 100);
    }

    #[test]
    fn critical_rule() {
        let mut s = SystemState::zeros(1, 1, 2);
        s.line_status = vec![true; 2];
        s.rho = vec![0.6, 0.96];
        assert!(is_critical(&s, 0.95));
        s.rho = vec![0.6, 0.94];
        assert!(!is_critical(&s, 0.95));
        s.line_status = vec![false; 2];
        assert!(!is_critical(&s, 0.95));
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::default().validate().is_ok());
        let bad = EnvConfig { tau_f: 3, ..EnvConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EnvConfig { rho_hard: 1.0, ..EnvConfig::default() };
        assert!(bad.validate().is_err());
    }
}
