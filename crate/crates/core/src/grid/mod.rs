//! Static network description, per-step operating state and the line-switching
//! action space.

pub mod cases;
mod state;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use state::{legal_actions, legal_switches, Action, SystemState, Topology};

/// One transmission line. `from_bus`/`to_bus` are bus ids and fix the sign
/// convention of the line flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance in p.u.
    pub reactance: f64,
    /// Thermal limit in MW.
    pub flow_limit: f64,
    /// Current-equivalent limit; identical to `flow_limit` under the DC proxy.
    pub current_limit: f64,
    pub switch_cost: f64,
}

impl LineRecord {
    pub fn new(id: usize, from_bus: usize, to_bus: usize, reactance: f64, flow_limit: f64) -> Self {
        Self {
            id,
            from_bus,
            to_bus,
            reactance,
            flow_limit,
            current_limit: flow_limit,
            switch_cost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Maximum output in MW.
    pub pmax: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    /// Nominal demand in MW, used as the base level by the chronic generator.
    pub nominal_p: f64,
}

/// Static grid description. Immutable once built; derived bus indexing is
/// computed at construction.
#[derive(Debug, Clone)]
pub struct GridModel {
    buses: Vec<usize>,
    lines: Vec<LineRecord>,
    generators: Vec<Generator>,
    loads: Vec<Load>,
    slack_bus: usize,
    base_mva: f64,
    lookup: HashMap<usize, usize>,
    ends: Vec<(Option<usize>, Option<usize>)>,
    energized: Vec<bool>,
}

pub const DEFAULT_BASE_MVA: f64 = 100.0;

impl GridModel {
    /// Builds the model without validating it; see [`validate_grid`].
    pub fn new(
        buses: Vec<usize>,
        lines: Vec<LineRecord>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
        slack_bus: usize,
    ) -> Self {
        let lookup: HashMap<usize, usize> =
            buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let ends = lines
            .iter()
            .map(|l| (lookup.get(&l.from_bus).copied(), lookup.get(&l.to_bus).copied()))
            .collect();
        let mut energized = vec![false; buses.len()];
        for b in generators.iter().map(|g| g.bus).chain(loads.iter().map(|l| l.bus)) {
            if let Some(&i) = lookup.get(&b) {
                energized[i] = true;
            }
        }
        Self {
            buses,
            lines,
            generators,
            loads,
            slack_bus,
            base_mva: DEFAULT_BASE_MVA,
            lookup,
            ends,
            energized,
        }
    }

    pub fn with_base_mva(mut self, base_mva: f64) -> Self {
        self.base_mva = base_mva;
        self
    }

    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn lines(&self) -> &[LineRecord] {
        &self.lines
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    pub fn slack_bus(&self) -> usize {
        self.slack_bus
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_actions(&self) -> usize {
        2 * self.lines.len() + 1
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.lookup.get(&id).copied()
    }

    /// Position of the slack bus. Panics on an unvalidated grid whose slack id is unknown.
    pub fn slack_index(&self) -> usize {
        self.lookup[&self.slack_bus]
    }

    /// Bus positions of a line's endpoints. Panics if the line references an unknown bus.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        match self.ends[line] {
            (Some(f), Some(t)) => (f, t),
            _ => panic!("line {line} references an unknown bus"),
        }
    }

    /// True for buses hosting at least one load or generator.
    pub fn is_energized(&self, bus_index: usize) -> bool {
        self.energized[bus_index]
    }

    pub fn gen_bus_index(&self, gen: usize) -> usize {
        self.lookup[&self.generators[gen].bus]
    }

    pub fn load_bus_index(&self, load: usize) -> usize {
        self.lookup[&self.loads[load].bus]
    }

    pub fn with_flow_limits(mut self, limits: &[f64]) -> Self {
        assert_eq!(limits.len(), self.lines.len());
        for (line, &f) in self.lines.iter_mut().zip(limits) {
            line.flow_limit = f;
            line.current_limit = f;
        }
        self
    }

    pub fn with_switch_costs(mut self, cost: f64) -> Self {
        for line in &mut self.lines {
            line.switch_cost = cost;
        }
        self
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Parses and validates a grid file. Any invariant violation is an error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let grid = file.into_model();
        let report = validate_grid(&grid);
        if report.is_valid() {
            Ok(grid)
        } else {
            Err(Error::InvalidGrid(report.violations.join("; ")))
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = GridFile {
            buses: self.buses.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| LineEntry {
                    from: l.from_bus,
                    to: l.to_bus,
                    x: l.reactance,
                    fmax: l.flow_limit,
                    cost: l.switch_cost,
                    amax: (l.current_limit != l.flow_limit).then_some(l.current_limit),
                })
                .collect(),
            gens: self
                .generators
                .iter()
                .map(|g| GenEntry::Full { bus: g.bus, pmax: g.pmax })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadEntry::Full { bus: l.bus, p: l.nominal_p })
                .collect(),
            slack: self.slack_bus,
            base_mva: Some(self.base_mva),
        };
        serde_json::to_string_pretty(&file).expect("grid serializes")
    }
}

/// Violations found by [`validate_grid`]; empty means the grid is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

pub fn validate_grid(grid: &GridModel) -> ValidationReport {
    let mut v = Vec::new();
    if grid.lookup.len() != grid.buses.len() {
        v.push("duplicate bus ids".to_string());
    }
    if grid.bus_index(grid.slack_bus).is_none() {
        v.push(format!("slack bus {} is not a bus", grid.slack_bus));
    }
    for (i, line) in grid.lines.iter().enumerate() {
        if line.id != i {
            v.push(format!("line id {} stored at position {i}", line.id));
        }
        let (f, t) = grid.ends[i];
        if f.is_none() {
            v.push(format!("unknown from-bus {}, line {i}", line.from_bus));
        }
        if t.is_none() {
            v.push(format!("unknown to-bus {}, line {i}", line.to_bus));
        }
        if line.from_bus == line.to_bus {
            v.push(format!("from-bus equals to-bus, line {i}"));
        }
        if !(line.reactance > 0.0) {
            v.push(format!("nonpositive reactance, line {i}"));
        }
        if !(line.flow_limit > 0.0) {
            v.push(format!("nonpositive flow limit, line {i}"));
        }
        if !(line.current_limit > 0.0) {
            v.push(format!("nonpositive current limit, line {i}"));
        }
        if !(line.switch_cost >= 0.0) {
            v.push(format!("negative switch cost, line {i}"));
        }
    }
    for (i, g) in grid.generators.iter().enumerate() {
        if grid.bus_index(g.bus).is_none() {
            v.push(format!("generator {i} at unknown bus {}", g.bus));
        }
        if !(g.pmax >= 0.0) {
            v.push(format!("negative pmax, generator {i}"));
        }
    }
    for (i, l) in grid.loads.iter().enumerate() {
        if grid.bus_index(l.bus).is_none() {
            v.push(format!("load {i} at unknown bus {}", l.bus));
        }
    }
    if !grid.buses.is_empty() && !fully_connected(grid) {
        v.push("grid not connected".to_string());
    }
    ValidationReport { violations: v }
}

fn fully_connected(grid: &GridModel) -> bool {
    let n = grid.n_buses();
    let mut adj = vec![Vec::new(); n];
    for &(f, t) in &grid.ends {
        if let (Some(f), Some(t)) = (f, t) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(b) = queue.pop_front() {
        for &nb in &adj[b] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    buses: Vec<usize>,
    lines: Vec<LineEntry>,
    gens: Vec<GenEntry>,
    loads: Vec<LoadEntry>,
    slack: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_mva: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LineEntry {
    from: usize,
    to: usize,
    x: f64,
    fmax: f64,
    #[serde(default)]
    cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amax: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GenEntry {
    Full { bus: usize, pmax: f64 },
    Pair(usize, f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LoadEntry {
    Full {
        bus: usize,
        #[serde(default)]
        p: f64,
    },
    Bus(usize),
}

impl GridFile {
    fn into_model(self) -> GridModel {
        let lines = self
            .lines
            .into_iter()
            .enumerate()
            .map(|(id, l)| LineRecord {
                id,
                from_bus: l.from,
                to_bus: l.to,
                reactance: l.x,
                flow_limit: l.fmax,
                current_limit: l.amax.unwrap_or(l.fmax),
                switch_cost: l.cost,
            })
            .collect();
        let gens = self
            .gens
            .into_iter()
            .map(|g| match g {
                GenEntry::Full { bus, pmax } | GenEntry::Pair(bus, pmax) => Generator { bus, pmax },
            })
            .collect();
        let loads = self
            .loads
            .into_iter()
            .map(|l| match l {
                LoadEntry::Full { bus, p } => Load { bus, nominal_p: p },
                LoadEntry::Bus(bus) => Load { bus, nominal_p: 0.0 },
            })
            .collect();
        GridModel::new(self.buses, lines, gens, loads, self.slack)
            .with_base_mva(self.base_mva.unwrap_or(DEFAULT_BASE_MVA))
    }
}
