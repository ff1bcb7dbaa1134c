use serde::{Deserialize, Serialize};

/// Remedial line-switching action. Integer encoding: 0 is do-nothing,
/// `1..=L` remove line `i-1`, `L+1..=2L` reconnect line `i-L-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    DoNothing,
    Remove(usize),
    Reconnect(usize),
}

impl Action {
    pub fn encode(self, n_lines: usize) -> usize {
        match self {
            Action::DoNothing => 0,
            Action::Remove(l) => 1 + l,
            Action::Reconnect(l) => 1 + n_lines + l,
        }
    }

    pub fn decode(index: usize, n_lines: usize) -> Option<Action> {
        match index {
            0 => Some(Action::DoNothing),
            i if i <= n_lines => Some(Action::Remove(i - 1)),
            i if i <= 2 * n_lines => Some(Action::Reconnect(i - 1 - n_lines)),
            _ => None,
        }
    }

    pub fn line(self) -> Option<usize> {
        match self {
            Action::DoNothing => None,
            Action::Remove(l) | Action::Reconnect(l) => Some(l),
        }
    }

    pub fn is_switch(self) -> bool {
        !matches!(self, Action::DoNothing)
    }
}

/// In-service flags, one per line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    pub in_service: Vec<bool>,
}

impl Topology {
    pub fn all_in_service(n_lines: usize) -> Self {
        Self {
            in_service: vec![true; n_lines],
        }
    }

    pub fn from_status(status: &[bool]) -> Self {
        Self {
            in_service: status.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.in_service.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_service.is_empty()
    }

    pub fn with_line(&self, line: usize, in_service: bool) -> Self {
        let mut t = self.clone();
        t.in_service[line] = in_service;
        t
    }

    /// Packed bitmask used as a cache key.
    pub fn key(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.in_service.len().div_ceil(64)];
        for (i, &on) in self.in_service.iter().enumerate() {
            if on {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }
}

/// Observable operating state X\[n\] of the grid at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub step: usize,
    pub gen_p: Vec<f64>,
    pub load_p: Vec<f64>,
    /// Signed MW flow, positive from `from_bus` to `to_bus`.
    pub flow: Vec<f64>,
    pub current: Vec<f64>,
    pub rho: Vec<f64>,
    pub line_status: Vec<bool>,
    /// Consecutive steps spent at rho >= 1.
    pub overflow_steps: Vec<u32>,
    /// Steps left before a deliberately switched line may be switched again.
    pub cooldown_line: Vec<u32>,
    /// Steps left before a tripped line may be switched again.
    pub failure_cooldown: Vec<u32>,
}

impl SystemState {
    /// All-zero state used to pad the observation window.
    pub fn zeros(n_gens: usize, n_loads: usize, n_lines: usize) -> Self {
        Self {
            step: 0,
            gen_p: vec![0.0; n_gens],
            load_p: vec![0.0; n_loads],
            flow: vec![0.0; n_lines],
            current: vec![0.0; n_lines],
            rho: vec![0.0; n_lines],
            line_status: vec![false; n_lines],
            overflow_steps: vec![0; n_lines],
            cooldown_line: vec![0; n_lines],
            failure_cooldown: vec![0; n_lines],
        }
    }

    pub fn n_lines(&self) -> usize {
        self.line_status.len()
    }

    pub fn topology(&self) -> Topology {
        Topology::from_status(&self.line_status)
    }

    /// Maximum risk margin over in-service lines; 0 when none is in service.
    pub fn max_rho(&self) -> f64 {
        self.rho
            .iter()
            .zip(&self.line_status)
            .filter(|(_, &on)| on)
            .map(|(&r, _)| r)
            .fold(0.0, f64::max)
    }

    /// Most loaded in-service line, lowest index on ties.
    pub fn most_loaded_line(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (l, (&r, &on)) in self.rho.iter().zip(&self.line_status).enumerate() {
            if on && best.is_none_or(|(_, b)| r > b) {
                best = Some((l, r));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn is_switchable(&self, line: usize) -> bool {
        self.cooldown_line[line] == 0 && self.failure_cooldown[line] == 0
    }

    pub fn is_legal(&self, action: Action) -> bool {
        match action {
            Action::DoNothing => true,
            Action::Remove(l) => {
                l < self.n_lines() && self.line_status[l] && self.is_switchable(l)
            }
            Action::Reconnect(l) => {
                l < self.n_lines() && !self.line_status[l] && self.is_switchable(l)
            }
        }
    }

    /// Number of entries written by [`SystemState::write_features`].
    pub fn feature_width(n_gens: usize, n_loads: usize, n_lines: usize) -> usize {
        n_gens + n_loads + 7 * n_lines
    }

    /// Raw (unnormalized) feature vector of the state.
    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.gen_p);
        out.extend_from_slice(&self.load_p);
        out.extend_from_slice(&self.flow);
        out.extend_from_slice(&self.current);
        out.extend_from_slice(&self.rho);
        out.extend(self.line_status.iter().map(|&s| if s { 1.0 } else { 0.0 }));
        out.extend(self.overflow_steps.iter().map(|&v| v as f64));
        out.extend(self.cooldown_line.iter().map(|&v| v as f64));
        out.extend(self.failure_cooldown.iter().map(|&v| v as f64));
    }
}

/// Legal actions in `state`, sorted by action index. Do-nothing is always legal.
pub fn legal_actions(state: &SystemState) -> Vec<Action> {
    let n = state.n_lines();
    let mut removals = Vec::new();
    let mut reconnects = Vec::new();
    for l in 0..n {
        if !state.is_switchable(l) {
            continue;
        }
        if state.line_status[l] {
            removals.push(Action::Remove(l));
        } else {
            reconnects.push(Action::Reconnect(l));
        }
    }
    let mut out = Vec::with_capacity(1 + removals.len() + reconnects.len());
    out.push(Action::DoNothing);
    out.extend(removals);
    out.extend(reconnects);
    out
}

/// Legal line switches in `state`, sorted by action index. Unlike
/// [`legal_actions`] this excludes do-nothing and may be empty.
pub fn legal_switches(state: &SystemState) -> Vec<Action> {
    let mut out = legal_actions(state);
    out.remove(0);
    out
}
