//! DC power flow: reduced susceptance matrix, angle solve, line flows and
//! island detection.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::{GridModel, Topology};

/// Net MW injection per bus (generation minus load), indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector {
    pub p: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n_buses: usize) -> Self {
        Self { p: vec![0.0; n_buses] }
    }

    /// Aggregates generator and load set-points onto their buses.
    pub fn from_setpoints(grid: &GridModel, gen_p: &[f64], load_p: &[f64]) -> Self {
        let mut p = vec![0.0; grid.n_buses()];
        for (g, &v) in gen_p.iter().enumerate() {
            p[grid.gen_bus_index(g)] += v;
        }
        for (d, &v) in load_p.iter().enumerate() {
            p[grid.load_bus_index(d)] -= v;
        }
        Self { p }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Rescales generation so that it matches total load exactly. When no
/// generation is scheduled the load is shared in proportion to `pmax`.
pub fn balance_generation(grid: &GridModel, gen_p: &[f64], load_p: &[f64]) -> Vec<f64> {
    let demand: f64 = load_p.iter().sum();
    let supply: f64 = gen_p.iter().sum();
    if supply > 0.0 {
        let s = demand / supply;
        return gen_p.iter().map(|g| g * s).collect();
    }
    let cap: f64 = grid.generators().iter().map(|g| g.pmax).sum();
    let n = grid.generators().len();
    grid.generators()
        .iter()
        .map(|g| {
            if cap > 0.0 {
                demand * g.pmax / cap
            } else {
                demand / n as f64
            }
        })
        .collect()
}

/// Connected-component label per bus position, labels numbered in order of
/// the lowest member bus.
pub fn component_labels(grid: &GridModel, topo: &Topology) -> Vec<usize> {
    let n = grid.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (l, &on) in topo.in_service.iter().enumerate() {
        if on {
            let (f, t) = grid.line_ends(l);
            let (rf, rt) = (find(&mut parent, f), find(&mut parent, t));
            if rf != rt {
                parent[rf.max(rt)] = rf.min(rt);
            }
        }
    }
    let mut label_of_root = HashMap::new();
    (0..n)
        .map(|b| {
            let r = find(&mut parent, b);
            let next = label_of_root.len();
            *label_of_root.entry(r).or_insert(next)
        })
        .collect()
}

/// Partition of the buses (by id) into connected components of the in-service graph.
pub fn islands(grid: &GridModel, topo: &Topology) -> Vec<Vec<usize>> {
    let labels = component_labels(grid, topo);
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); count];
    for (b, &c) in labels.iter().enumerate() {
        out[c].push(grid.buses()[b]);
    }
    out
}

/// Reduced susceptance matrix with the slack row and column removed.
#[derive(Debug, Clone)]
pub struct ReducedBbus {
    pub matrix: DMatrix<f64>,
    /// Bus position of each row/column.
    pub buses: Vec<usize>,
}

/// Builds B' over the slack bus's component. Buses outside that component
/// may only be bare (no load, no generator); they are left out of B' and
/// keep a zero angle.
pub fn build_bbus(grid: &GridModel, topo: &Topology) -> Result<ReducedBbus> {
    if topo.len() != grid.n_lines() {
        return Err(Error::DimensionMismatch(format!(
            "topology has {} entries, grid has {} lines",
            topo.len(),
            grid.n_lines()
        )));
    }
    let labels = component_labels(grid, topo);
    let slack = grid.slack_index();
    let main = labels[slack];
    if let Some(b) = (0..grid.n_buses()).find(|&b| labels[b] != main && grid.is_energized(b)) {
        return Err(Error::SingularTopology(format!(
            "bus {} carries injection but is disconnected from the slack bus",
            grid.buses()[b]
        )));
    }
    let buses: Vec<usize> = (0..grid.n_buses())
        .filter(|&b| b != slack && labels[b] == main)
        .collect();
    let mut pos = vec![usize::MAX; grid.n_buses()];
    for (i, &b) in buses.iter().enumerate() {
        pos[b] = i;
    }
    let mut m = DMatrix::zeros(buses.len(), buses.len());
    for (l, line) in grid.lines().iter().enumerate() {
        if !topo.in_service[l] {
            continue;
        }
        let (f, t) = grid.line_ends(l);
        let y = 1.0 / line.reactance;
        let (pf, pt) = (pos[f], pos[t]);
        if pf != usize::MAX {
            m[(pf, pf)] += y;
        }
        if pt != usize::MAX {
            m[(pt, pt)] += y;
        }
        if pf != usize::MAX && pt != usize::MAX {
            m[(pf, pt)] -= y;
            m[(pt, pf)] -= y;
        }
    }
    Ok(ReducedBbus { matrix: m, buses })
}

/// Cholesky factor of B' for one topology.
#[derive(Debug, Clone)]
pub struct DcFactor {
    n_buses: usize,
    base_mva: f64,
    bbus: ReducedBbus,
    chol: Cholesky<f64, Dyn>,
}

impl DcFactor {
    pub fn new(grid: &GridModel, topo: &Topology) -> Result<Self> {
        let bbus = build_bbus(grid, topo)?;
        let chol = Cholesky::new(bbus.matrix.clone())
            .ok_or_else(|| Error::SingularTopology("B' is not positive definite".into()))?;
        Ok(Self {
            n_buses: grid.n_buses(),
            base_mva: grid.base_mva(),
            bbus,
            chol,
        })
    }

    pub fn bbus(&self) -> &ReducedBbus {
        &self.bbus
    }

    /// Bus angles in radians for MW injections; the slack angle is zero.
    pub fn solve(&self, inj: &InjectionVector) -> Vec<f64> {
        let rhs = DVector::from_iterator(
            self.bbus.buses.len(),
            self.bbus.buses.iter().map(|&b| inj.p[b] / self.base_mva),
        );
        let x = self.chol.solve(&rhs);
        let mut theta = vec![0.0; self.n_buses];
        for (i, &b) in self.bbus.buses.iter().enumerate() {
            theta[b] = x[i];
        }
        theta
    }

    /// Dense inverse of B' (columns ordered as `bbus().buses`).
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Bus angles in radians for the given injections and topology.
pub fn solve_dc(grid: &GridModel, inj: &InjectionVector, topo: &Topology) -> Result<Vec<f64>> {
    Ok(DcFactor::new(grid, topo)?.solve(inj))
}

/// Signed MW flows and risk margins. Out-of-service lines carry zero flow.
pub fn line_flows(grid: &GridModel, theta: &[f64], topo: &Topology) -> (Vec<f64>, Vec<f64>) {
    let base = grid.base_mva();
    let mut flow = vec![0.0; grid.n_lines()];
    let mut rho = vec![0.0; grid.n_lines()];
    for (l, line) in grid.lines().iter().enumerate() {
        if topo.in_service[l] {
            let (f, t) = grid.line_ends(l);
            flow[l] = base * (theta[f] - theta[t]) / line.reactance;
            rho[l] = flow[l].abs() / line.current_limit;
        }
    }
    (flow, rho)
}

/// Topology-keyed cache: concurrent readers, exclusive writer.
#[derive(Debug)]
pub struct TopologyCache<T> {
    map: RwLock<HashMap<Vec<u64>, Arc<T>>>,
    capacity: usize,
}

impl<T> TopologyCache<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            capacity: capacity.max(1),
        }
    }

    pub fn get_or_try_insert(
        &self,
        topo: &Topology,
        build: impl FnOnce() -> Result<T>,
    ) -> Result<Arc<T>> {
        let key = topo.key();
        if let Some(v) = self.map.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let value = Arc::new(build()?);
        let mut map = self.map.write().expect("cache lock");
        if map.len() >= self.capacity {
            map.clear();
        }
        Ok(Arc::clone(map.entry(key).or_insert(value)))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
