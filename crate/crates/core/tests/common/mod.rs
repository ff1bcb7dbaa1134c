//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the crate's solver or sensitivity code.

#![allow(dead_code)]

use gridrl::grid::{Action, GridModel, SystemState, Topology};
use gridrl::powerflow::{balance_generation, InjectionVector};
use rand::Rng;

/// Dense Gaussian elimination with partial pivoting. Returns `None` for a
/// (numerically) singular system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Whether the in-service lines connect every bus.
pub fn connected(grid: &GridModel, status: &[bool]) -> bool {
    let n = grid.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (l, _) in grid.lines().iter().enumerate().filter(|(l, _)| status[*l]) {
        let (f, t) = grid.line_ends(l);
        let (a, b) = (root(&mut parent, f), root(&mut parent, t));
        parent[a] = b;
    }
    let r = root(&mut parent, 0);
    (0..n).all(|i| root(&mut parent, i) == r)
}

/// Reference DC flows in MW: full nodal susceptance matrix, slack row and
/// column deleted, solved densely. `None` when the topology is split.
pub fn reference_flows(grid: &GridModel, p_mw: &[f64], status: &[bool]) -> Option<Vec<f64>> {
    if !connected(grid, status) {
        return None;
    }
    let n = grid.n_buses();
    let slack = grid.slack_index();
    let mut b = vec![vec![0.0; n]; n];
    for (l, line) in grid.lines().iter().enumerate() {
        if !status[l] {
            continue;
        }
        let (f, t) = grid.line_ends(l);
        let y = 1.0 / line.reactance;
        b[f][f] += y;
        b[t][t] += y;
        b[f][t] -= y;
        b[t][f] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let a: Vec<Vec<f64>> = keep.iter().map(|&i| keep.iter().map(|&j| b[i][j]).collect()).collect();
    let rhs: Vec<f64> = keep.iter().map(|&i| p_mw[i] / grid.base_mva()).collect();
    let sol = gauss_solve(a, rhs)?;
    let mut theta = vec![0.0; n];
    for (k, &i) in keep.iter().enumerate() {
        theta[i] = sol[k];
    }
    Some(
        grid.lines()
            .iter()
            .enumerate()
            .map(|(l, line)| {
                if !status[l] {
                    return 0.0;
                }
                let (f, t) = grid.line_ends(l);
                grid.base_mva() * (theta[f] - theta[t]) / line.reactance
            })
            .collect(),
    )
}

/// Random loads around nominal and a random balanced dispatch.
pub fn random_setpoints<R: Rng>(grid: &GridModel, rng: &mut R, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let load_p: Vec<f64> = grid.loads().iter().map(|l| l.nominal_p * rng.random_range(lo..hi)).collect();
    let raw: Vec<f64> = grid.generators().iter().map(|g| g.pmax * rng.random_range(0.1..1.0)).collect();
    let gen_p = balance_generation(grid, &raw, &load_p);
    (gen_p, load_p)
}

pub fn injections(grid: &GridModel, gen_p: &[f64], load_p: &[f64]) -> Vec<f64> {
    InjectionVector::from_setpoints(grid, gen_p, load_p).p
}

/// A system state built from reference flows. `None` for split topologies.
pub fn state_from(grid: &GridModel, gen_p: Vec<f64>, load_p: Vec<f64>, status: Vec<bool>) -> Option<SystemState> {
    let p = injections(grid, &gen_p, &load_p);
    let flow = reference_flows(grid, &p, &status)?;
    let rho: Vec<f64> = flow.iter().zip(grid.lines()).map(|(f, l)| f.abs() / l.current_limit).collect();
    let n = grid.n_lines();
    Some(SystemState {
        step: 0,
        gen_p,
        load_p,
        current: flow.iter().map(|f| f.abs()).collect(),
        flow,
        rho,
        line_status: status,
        overflow_steps: vec![0; n],
        cooldown_line: vec![0; n],
        failure_cooldown: vec![0; n],
    })
}

/// Effective set by brute force: every legal removal is re-solved exactly
/// and judged on the post-switch flows.
pub fn brute_force_effective_set(state: &SystemState, grid: &GridModel) -> Vec<Action> {
    let n = grid.n_lines();
    let p = injections(grid, &state.gen_p, &state.load_p);
    let limit = |l: usize| grid.lines()[l].flow_limit;
    let l_max = (0..n)
        .filter(|&l| state.line_status[l])
        .max_by(|&a, &b| state.rho[a].total_cmp(&state.rho[b]).then(b.cmp(&a)));
    let mut out = Vec::new();
    if let Some(m) = l_max {
        for k in 0..n {
            let legal = state.line_status[k] && state.cooldown_line[k] == 0 && state.failure_cooldown[k] == 0;
            if k == m || !legal {
                continue;
            }
            let mut after = state.line_status.clone();
            after[k] = false;
            let Some(f) = reference_flows(grid, &p, &after) else { continue };
            if f[m].abs() > limit(m) {
                continue;
            }
            if (0..n).any(|l| l != m && after[l] && f[l].abs() > limit(l)) {
                continue;
            }
            out.push(Action::Remove(k));
        }
    }
    for k in 0..n {
        if !state.line_status[k] && state.cooldown_line[k] == 0 && state.failure_cooldown[k] == 0 {
            out.push(Action::Reconnect(k));
        }
    }
    out
}

/// Random topology with up to `max_out` lines removed, kept connected.
pub fn random_topology<R: Rng>(grid: &GridModel, rng: &mut R, max_out: usize) -> Vec<bool> {
    let n = grid.n_lines();
    let mut status = vec![true; n];
    let k = rng.random_range(0..=max_out);
    for _ in 0..k {
        let l = rng.random_range(0..n);
        status[l] = false;
        if !connected(grid, &status) {
            status[l] = true;
        }
    }
    status
}

pub fn topo(status: &[bool]) -> Topology {
    Topology::from_status(status)
}

/// Random state with max rho >= 0.95, some lines out and random cooldowns.
pub fn random_critical_state<R: Rng>(grid: &GridModel, rng: &mut R) -> SystemState {
    loop {
        let level = rng.random_range(0.8..1.6);
        let (g, d) = random_setpoints(grid, rng, 0.9 * level, 1.1 * level);
        let status = random_topology(grid, rng, 2);
        let Some(mut s) = state_from(grid, g, d, status) else { continue };
        if s.max_rho() < 0.95 || s.max_rho() > 1.3 {
            continue;
        }
        let n = grid.n_lines();
        for l in 0..n {
            match rng.random_range(0..10) {
                0 => s.cooldown_line[l] = rng.random_range(1..3),
                1 => s.failure_cooldown[l] = rng.random_range(1..12),
                _ => {}
            }
        }
        return s;
    }
}
