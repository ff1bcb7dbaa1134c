//! Power transfer and line outage distribution factors, and the linearized
//! prediction of post-action flows and rewards built on them.

use nalgebra::DMatrix;

use crate::env::reward::{normalize_reward, raw_reward};
use crate::error::{Error, Result};
use crate::grid::{Action, GridModel, SystemState, Topology};
use crate::powerflow::{line_flows, solve_dc, DcFactor, InjectionVector};

/// `|1 - PTDF_k,(k)|` below this marks the outage of `k` as islanding.
pub const ISLANDING_TOL: f64 = 1e-8;

/// L x N injection sensitivities; entry (l, b) is the flow change on `l` per
/// unit injected at bus position `b` and withdrawn at the slack.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    values: DMatrix<f64>,
}

impl PtdfMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.values[(line, bus)]
    }

    /// Flow sensitivity of `line` to a transfer from bus `from` to bus `to`.
    pub fn transfer(&self, line: usize, from: usize, to: usize) -> f64 {
        self.values[(line, from)] - self.values[(line, to)]
    }
}

pub fn ptdf(grid: &GridModel, topo: &Topology) -> Result<PtdfMatrix> {
    let factor = DcFactor::new(grid, topo)?;
    Ok(ptdf_from_factor(grid, topo, &factor))
}

pub fn ptdf_from_factor(grid: &GridModel, topo: &Topology, factor: &DcFactor) -> PtdfMatrix {
    let inv = factor.inverse();
    let cols = &factor.bbus().buses;
    let mut pos = vec![None; grid.n_buses()];
    for (i, &b) in cols.iter().enumerate() {
        pos[b] = Some(i);
    }
    let mut values = DMatrix::zeros(grid.n_lines(), grid.n_buses());
    for (l, line) in grid.lines().iter().enumerate() {
        if !topo.in_service[l] {
            continue;
        }
        let (f, t) = grid.line_ends(l);
        for (j, &b) in cols.iter().enumerate() {
            let tf = pos[f].map_or(0.0, |i| inv[(i, j)]);
            let tt = pos[t].map_or(0.0, |i| inv[(i, j)]);
            values[(l, b)] = (tf - tt) / line.reactance;
        }
    }
    PtdfMatrix { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutageStatus {
    Valid,
    /// Removing the line splits the in-service graph.
    Islanding,
    /// The line is already out of service.
    OutOfService,
}

/// L x L outage factors at one topology. Column `k` is usable only when
/// `status(k)` is [`OutageStatus::Valid`].
#[derive(Debug, Clone)]
pub struct LodfMatrix {
    values: DMatrix<f64>,
    status: Vec<OutageStatus>,
}

impl LodfMatrix {
    pub fn n_lines(&self) -> usize {
        self.status.len()
    }

    pub fn status(&self, k: usize) -> OutageStatus {
        self.status[k]
    }

    pub fn is_islanding(&self, k: usize) -> bool {
        self.status[k] == OutageStatus::Islanding
    }

    /// Factor for the flow on `line` after outage of `outage`, `None` for flagged columns.
    pub fn get(&self, line: usize, outage: usize) -> Option<f64> {
        (self.status[outage] == OutageStatus::Valid).then(|| self.values[(line, outage)])
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

pub fn lodf(ptdf: &PtdfMatrix, grid: &GridModel, topo: &Topology) -> LodfMatrix {
    let n = grid.n_lines();
    let mut values = DMatrix::zeros(n, n);
    let mut status = vec![OutageStatus::Valid; n];
    for k in 0..n {
        values[(k, k)] = -1.0;
        if !topo.in_service[k] {
            status[k] = OutageStatus::OutOfService;
            continue;
        }
        let (f, t) = grid.line_ends(k);
        let denom = 1.0 - ptdf.transfer(k, f, t);
        if denom.abs() < ISLANDING_TOL {
            status[k] = OutageStatus::Islanding;
            continue;
        }
        for l in (0..n).filter(|&l| l != k) {
            values[(l, k)] = ptdf.transfer(l, f, t) / denom;
        }
    }
    LodfMatrix { values, status }
}

/// Post-outage flows `F_l + LODF_l,k * F_k`, with the removed line at zero.
pub fn predict_removal_flows(flow: &[f64], lodf: &LodfMatrix, k: usize) -> Result<Vec<f64>> {
    match lodf.status(k) {
        OutageStatus::Valid => {}
        OutageStatus::Islanding => return Err(Error::IslandingOutage(k)),
        OutageStatus::OutOfService => {
            return Err(Error::IllegalAction(format!("line {k} is not in service")))
        }
    }
    let fk = flow[k];
    let col = lodf.values.column(k);
    Ok(flow
        .iter()
        .enumerate()
        .map(|(l, &f)| if l == k { 0.0 } else { f + col[l] * fk })
        .collect())
}

/// Post-reconnection flows by an exact re-solve with `k` back in service.
pub fn predict_reconnection_flows(
    grid: &GridModel,
    topo: &Topology,
    inj: &InjectionVector,
    k: usize,
) -> Result<Vec<f64>> {
    if topo.in_service[k] {
        return Err(Error::IllegalAction(format!("line {k} is already in service")));
    }
    let after = topo.with_line(k, true);
    let theta = solve_dc(grid, inj, &after)?;
    Ok(line_flows(grid, &theta, &after).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardEstimate {
    pub raw: f64,
    pub normalized: f64,
}

/// Reward of a predicted flow vector under the topology that results from `action`.
pub fn reward_from_flows(
    grid: &GridModel,
    flows: &[f64],
    after: &Topology,
    action: Action,
    mu_line: f64,
) -> RewardEstimate {
    let rho: Vec<f64> = grid
        .lines()
        .iter()
        .enumerate()
        .map(|(l, line)| {
            if after.in_service[l] {
                flows[l].abs() / line.current_limit
            } else {
                0.0
            }
        })
        .collect();
    let raw = raw_reward(&rho, action, mu_line, grid);
    RewardEstimate {
        raw,
        normalized: normalize_reward(raw, grid.n_lines()),
    }
}

/// Topology after applying `action` to `state`.
pub fn topology_after(state: &SystemState, action: Action) -> Topology {
    let topo = state.topology();
    match action {
        Action::DoNothing => topo,
        Action::Remove(k) => topo.with_line(k, false),
        Action::Reconnect(k) => topo.with_line(k, true),
    }
}

/// Linearized reward estimate for taking `action` in `state`: LODF for
/// removals, exact re-solve for reconnections, identity for do-nothing.
pub fn estimate_reward(
    state: &SystemState,
    action: Action,
    grid: &GridModel,
    lodf: &LodfMatrix,
    mu_line: f64,
) -> Result<RewardEstimate> {
    let flows = match action {
        Action::DoNothing => state.flow.clone(),
        Action::Remove(k) => predict_removal_flows(&state.flow, lodf, k)?,
        Action::Reconnect(k) => {
            let inj = InjectionVector::from_setpoints(grid, &state.gen_p, &state.load_p);
            predict_reconnection_flows(grid, &state.topology(), &inj, k)?
        }
    };
    Ok(reward_from_flows(grid, &flows, &topology_after(state, action), action, mu_line))
}
