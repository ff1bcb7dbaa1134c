//! Built-in networks: small hand-checkable fixtures and the IEEE 14- and
//! 30-bus topologies with their standard branch reactances and loads.

use super::{Generator, GridModel, LineRecord, Load, Topology};
use crate::powerflow::{balance_generation, line_flows, solve_dc, InjectionVector};

/// Three buses 1-2-3 with unit reactances, lines (1-2, 1-3, 3-2), generator
/// at bus 1, 1 MW load at bus 2. Per-unit base of 1 MVA so MW and p.u. coincide.
pub fn triangle(limits: [f64; 3]) -> GridModel {
    let lines = vec![
        LineRecord::new(0, 1, 2, 1.0, limits[0]),
        LineRecord::new(1, 1, 3, 1.0, limits[1]),
        LineRecord::new(2, 3, 2, 1.0, limits[2]),
    ];
    GridModel::new(
        vec![1, 2, 3],
        lines,
        vec![Generator { bus: 1, pmax: 10.0 }],
        vec![Load { bus: 2, nominal_p: 1.0 }],
        1,
    )
    .with_base_mva(1.0)
}

/// Two buses joined by `n_parallel` identical unit-reactance lines.
pub fn parallel(n_parallel: usize) -> GridModel {
    let lines = (0..n_parallel).map(|i| LineRecord::new(i, 1, 2, 1.0, 1.0)).collect();
    GridModel::new(
        vec![1, 2],
        lines,
        vec![Generator { bus: 1, pmax: 10.0 }],
        vec![Load { bus: 2, nominal_p: 1.0 }],
        1,
    )
    .with_base_mva(1.0)
}

const IEEE14_BRANCHES: [(usize, usize, f64); 20] = [
    (1, 2, 0.05917),
    (1, 5, 0.22304),
    (2, 3, 0.19797),
    (2, 4, 0.17632),
    (2, 5, 0.17388),
    (3, 4, 0.17103),
    (4, 5, 0.04211),
    (4, 7, 0.20912),
    (4, 9, 0.55618),
    (5, 6, 0.25202),
    (6, 11, 0.19890),
    (6, 12, 0.25581),
    (6, 13, 0.13027),
    (7, 8, 0.17615),
    (7, 9, 0.11001),
    (9, 10, 0.08450),
    (9, 14, 0.27038),
    (10, 11, 0.19207),
    (12, 13, 0.19988),
    (13, 14, 0.34802),
];

const IEEE14_LOADS: [(usize, f64); 11] = [
    (2, 21.7),
    (3, 94.2),
    (4, 47.8),
    (5, 7.6),
    (6, 11.2),
    (9, 29.5),
    (10, 9.0),
    (11, 3.5),
    (12, 6.1),
    (13, 13.5),
    (14, 14.9),
];

const IEEE14_GENS: [(usize, f64); 5] = [(1, 332.4), (2, 140.0), (3, 100.0), (6, 100.0), (8, 100.0)];

const IEEE30_BRANCHES: [(usize, usize, f64); 41] = [
    (1, 2, 0.0575),
    (1, 3, 0.1652),
    (2, 4, 0.1737),
    (3, 4, 0.0379),
    (2, 5, 0.1983),
    (2, 6, 0.1763),
    (4, 6, 0.0414),
    (5, 7, 0.1160),
    (6, 7, 0.0820),
    (6, 8, 0.0420),
    (6, 9, 0.2080),
    (6, 10, 0.5560),
    (9, 11, 0.2080),
    (9, 10, 0.1100),
    (4, 12, 0.2560),
    (12, 13, 0.1400),
    (12, 14, 0.2559),
    (12, 15, 0.1304),
    (12, 16, 0.1987),
    (14, 15, 0.1997),
    (16, 17, 0.1923),
    (15, 18, 0.2185),
    (18, 19, 0.1292),
    (19, 20, 0.0680),
    (10, 20, 0.2090),
    (10, 17, 0.0845),
    (10, 21, 0.0749),
    (10, 22, 0.1499),
    (21, 22, 0.0236),
    (15, 23, 0.2020),
    (22, 24, 0.1790),
    (23, 24, 0.2700),
    (24, 25, 0.3292),
    (25, 26, 0.3800),
    (25, 27, 0.2087),
    (28, 27, 0.3960),
    (27, 29, 0.4153),
    (27, 30, 0.6027),
    (29, 30, 0.4533),
    (8, 28, 0.2000),
    (6, 28, 0.0599),
];

const IEEE30_LOADS: [(usize, f64); 21] = [
    (2, 21.7),
    (3, 2.4),
    (4, 7.6),
    (5, 94.2),
    (7, 22.8),
    (8, 30.0),
    (10, 5.8),
    (12, 11.2),
    (14, 6.2),
    (15, 8.2),
    (16, 3.5),
    (17, 9.0),
    (18, 3.2),
    (19, 9.5),
    (20, 2.2),
    (21, 17.5),
    (23, 3.2),
    (24, 8.7),
    (26, 3.5),
    (29, 2.4),
    (30, 10.6),
];

const IEEE30_GENS: [(usize, f64); 6] = [
    (1, 360.2),
    (2, 140.0),
    (5, 100.0),
    (8, 100.0),
    (11, 100.0),
    (13, 100.0),
];

fn build(
    n_buses: usize,
    branches: &[(usize, usize, f64)],
    loads: &[(usize, f64)],
    gens: &[(usize, f64)],
) -> GridModel {
    let lines = branches
        .iter()
        .enumerate()
        .map(|(i, &(f, t, x))| LineRecord::new(i, f, t, x, 1.0))
        .collect();
    let grid = GridModel::new(
        (1..=n_buses).collect(),
        lines,
        gens.iter().map(|&(bus, pmax)| Generator { bus, pmax }).collect(),
        loads.iter().map(|&(bus, p)| Load { bus, nominal_p: p }).collect(),
        1,
    );
    let limits = nominal_limits(&grid, 1.5, 10.0);
    grid.with_flow_limits(&limits)
}

/// IEEE 14-bus network. Thermal limits are 1.5x the nominal-load DC flow,
/// floored at 10 MW (the original case carries no ratings).
pub fn ieee14() -> GridModel {
    build(14, &IEEE14_BRANCHES, &IEEE14_LOADS, &IEEE14_GENS)
}

/// IEEE 30-bus network with limits derived as for [`ieee14`].
pub fn ieee30() -> GridModel {
    build(30, &IEEE30_BRANCHES, &IEEE30_LOADS, &IEEE30_GENS)
}

/// Nominal-load DC flows with generation dispatched in proportion to capacity.
pub fn nominal_flows(grid: &GridModel) -> Vec<f64> {
    let load_p: Vec<f64> = grid.loads().iter().map(|l| l.nominal_p).collect();
    let gen_p = balance_generation(grid, &vec![0.0; grid.generators().len()], &load_p);
    let inj = InjectionVector::from_setpoints(grid, &gen_p, &load_p);
    let topo = Topology::all_in_service(grid.n_lines());
    let theta = solve_dc(grid, &inj, &topo).expect("built-in case is connected");
    line_flows(grid, &theta, &topo).0
}

/// `headroom * |nominal flow|`, floored at `floor_mw`.
pub fn nominal_limits(grid: &GridModel, headroom: f64, floor_mw: f64) -> Vec<f64> {
    nominal_flows(grid)
        .iter()
        .map(|f| (headroom * f.abs()).max(floor_mw))
        .collect()
}

/// Looks up a built-in case by name.
pub fn by_name(name: &str) -> Option<GridModel> {
    match name {
        "ieee14" => Some(ieee14()),
        "ieee30" => Some(ieee30()),
        "triangle" => Some(triangle([1.1, 1.0, 0.3])),
        _ => None,
    }
}
