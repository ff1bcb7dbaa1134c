use std::sync::Arc;

use crate::error::Result;
use crate::grid::{Action, GridModel, SystemState, Topology};
use crate::powerflow::{line_flows, DcFactor, InjectionVector, TopologyCache};
use crate::sensitivity::{
    lodf, predict_removal_flows, ptdf_from_factor, reward_from_flows, topology_after,
    LodfMatrix, RewardEstimate,
};

const FACTOR_CACHE: usize = 512;
const LODF_CACHE: usize = 128;

/// DC solver bound to one grid, with topology-keyed caches for the B'
/// factorization and the LODF matrix. Shareable across threads.
#[derive(Debug)]
pub struct GridEngine {
    grid: Arc<GridModel>,
    factors: TopologyCache<DcFactor>,
    lodfs: TopologyCache<LodfMatrix>,
}

impl GridEngine {
    pub fn new(grid: GridModel) -> Self {
        Self::from_arc(Arc::new(grid))
    }

    pub fn from_arc(grid: Arc<GridModel>) -> Self {
        Self {
            grid,
            factors: TopologyCache::new(FACTOR_CACHE),
            lodfs: TopologyCache::new(LODF_CACHE),
        }
    }

    pub fn grid(&self) -> &GridModel {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<GridModel> {
        Arc::clone(&self.grid)
    }

    pub fn factor(&self, topo: &Topology) -> Result<Arc<DcFactor>> {
        self.factors
            .get_or_try_insert(topo, || DcFactor::new(&self.grid, topo))
    }

    /// Bus angles for `inj` at `topo`.
    pub fn solve(&self, inj: &InjectionVector, topo: &Topology) -> Result<Vec<f64>> {
        Ok(self.factor(topo)?.solve(inj))
    }

    /// Line flows and risk margins for `inj` at `topo`.
    pub fn flows(&self, inj: &InjectionVector, topo: &Topology) -> Result<(Vec<f64>, Vec<f64>)> {
        let theta = self.solve(inj, topo)?;
        Ok(line_flows(&self.grid, &theta, topo))
    }

    pub fn lodf(&self, topo: &Topology) -> Result<Arc<LodfMatrix>> {
        self.lodfs.get_or_try_insert(topo, || {
            let factor = self.factor(topo)?;
            let p = ptdf_from_factor(&self.grid, topo, &factor);
            Ok(lodf(&p, &self.grid, topo))
        })
    }

    /// Predicted post-action flows; same semantics as the uncached
    /// [`crate::sensitivity::estimate_reward`] path.
    pub fn predict_flows(
        &self,
        state: &SystemState,
        action: Action,
        lodf: &LodfMatrix,
    ) -> Result<Vec<f64>> {
        match action {
            Action::DoNothing => Ok(state.flow.clone()),
            Action::Remove(k) => predict_removal_flows(&state.flow, lodf, k),
            Action::Reconnect(k) => {
                if state.line_status[k] {
                    return Err(crate::Error::IllegalAction(format!(
                        "line {k} is already in service"
                    )));
                }
                let inj = InjectionVector::from_setpoints(&self.grid, &state.gen_p, &state.load_p);
                let after = state.topology().with_line(k, true);
                Ok(self.flows(&inj, &after)?.0)
            }
        }
    }

    pub fn estimate_reward(
        &self,
        state: &SystemState,
        action: Action,
        lodf: &LodfMatrix,
        mu_line: f64,
    ) -> Result<RewardEstimate> {
        let flows = self.predict_flows(state, action, lodf)?;
        Ok(reward_from_flows(
            &self.grid,
            &flows,
            &topology_after(state, action),
            action,
            mu_line,
        ))
    }
}
