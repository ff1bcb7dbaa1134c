use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::engine::GridEngine;
use crate::env::{is_critical, EnvConfig, Environment, EpisodeChronic, TraceRecord};
use crate::error::{Error, Result};
use crate::grid::Action;

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub id: String,
    pub month: Option<u32>,
    pub survival_time: usize,
    pub horizon: usize,
    pub blackout: bool,
    /// Steps at which the agent faced a critical state.
    pub critical_steps: usize,
    pub do_nothing: usize,
    pub reconnects: usize,
    pub removals: usize,
    /// Distinct switching actions chosen during the episode.
    pub unique_actions: usize,
    pub mean_reward: f64,
}

impl EpisodeReport {
    /// Action shares (do-nothing, reconnect, removal) in percent over critical steps.
    pub fn action_percentages(&self) -> Option<[f64; 3]> {
        if self.critical_steps == 0 {
            return None;
        }
        let n = self.critical_steps as f64;
        Some([
            100.0 * self.do_nothing as f64 / n,
            100.0 * self.reconnects as f64 / n,
            100.0 * self.removals as f64 / n,
        ])
    }
}

/// Aggregate metrics of one agent over a set of test episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub n_actions: usize,
    pub avg_survival_time: f64,
    /// Averaged over episodes with at least one critical step; `None` when there were none.
    pub pct_do_nothing: Option<f64>,
    pub pct_reconnect: Option<f64>,
    pub pct_removals: Option<f64>,
    pub avg_action_diversity: f64,
    /// Diversity as a percentage of the full action space (2L+1 actions).
    pub avg_action_diversity_pct: f64,
    pub episodes: Vec<EpisodeReport>,
}

impl EvalReport {
    pub fn from_episodes(agent: &str, n_actions: usize, episodes: Vec<EpisodeReport>) -> Self {
        let n = episodes.len().max(1) as f64;
        let avg_st = episodes.iter().map(|e| e.survival_time as f64).sum::<f64>() / n;
        let shares: Vec<[f64; 3]> = episodes.iter().filter_map(|e| e.action_percentages()).collect();
        let pct = |k: usize| {
            (!shares.is_empty()).then(|| shares.iter().map(|s| s[k]).sum::<f64>() / shares.len() as f64)
        };
        let diversity = episodes.iter().map(|e| e.unique_actions as f64).sum::<f64>() / n;
        Self {
            agent: agent.to_string(),
            n_actions,
            avg_survival_time: avg_st,
            pct_do_nothing: pct(0),
            pct_reconnect: pct(1),
            pct_removals: pct(2),
            avg_action_diversity: diversity,
            avg_action_diversity_pct: 100.0 * diversity / n_actions.max(1) as f64,
            episodes,
        }
    }

    pub fn write_episodes_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record([
            "episode",
            "month",
            "survival_time",
            "horizon",
            "blackout",
            "critical_steps",
            "do_nothing",
            "reconnects",
            "removals",
            "unique_actions",
            "mean_reward",
        ])
        .map_err(|e| csv_err(path, e))?;
        for e in &self.episodes {
            w.write_record([
                e.id.clone(),
                e.month.map_or_else(String::new, |m| m.to_string()),
                e.survival_time.to_string(),
                e.horizon.to_string(),
                e.blackout.to_string(),
                e.critical_steps.to_string(),
                e.do_nothing.to_string(),
                e.reconnects.to_string(),
                e.removals.to_string(),
                e.unique_actions.to_string(),
                format!("{:.6}", e.mean_reward),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn fmt_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Column header of the comparison table.
pub const TABLE_HEADER: [&str; 8] = [
    "action_space",
    "agent",
    "avg_st",
    "pct_do_nothing",
    "pct_reconnect",
    "pct_removals",
    "avg_action_diversity",
    "avg_action_diversity_pct",
];

fn table_row(action_space: &str, r: &EvalReport) -> [String; 8] {
    [
        action_space.to_string(),
        r.agent.clone(),
        format!("{:.2}", r.avg_survival_time),
        fmt_pct(r.pct_do_nothing),
        fmt_pct(r.pct_reconnect),
        fmt_pct(r.pct_removals),
        format!("{:.3}", r.avg_action_diversity),
        format!("{:.3}", r.avg_action_diversity_pct),
    ]
}

/// One row per agent.
pub fn write_comparison_csv(path: impl AsRef<Path>, action_space: &str, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TABLE_HEADER).map_err(|e| csv_err(path, e))?;
    for r in reports {
        w.write_record(table_row(action_space, r)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fixed-width text rendering of the comparison table.
pub fn format_table(action_space: &str, reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 8]> = reports.iter().map(|r| table_row(action_space, r)).collect();
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(out, "# diversity percentage base: |A| = {} actions (do-nothing included)", r.n_actions);
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(TABLE_HEADER.to_vec()));
    for row in &rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Runs `agent` on one chronic until blackout or the horizon.
pub fn run_episode(
    agent: &Agent,
    engine: &Arc<GridEngine>,
    env_cfg: &EnvConfig,
    chronic: Arc<EpisodeChronic>,
    seed: u64,
) -> Result<(EpisodeReport, Vec<TraceRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Environment::new(Arc::clone(engine), env_cfg.clone())?;
    let horizon = chronic.horizon();
    let mut report = EpisodeReport {
        id: chronic.id.clone(),
        month: chronic.month,
        survival_time: horizon,
        horizon,
        blackout: false,
        critical_steps: 0,
        do_nothing: 0,
        reconnects: 0,
        removals: 0,
        unique_actions: 0,
        mean_reward: 0.0,
    };
    let mut window = env.reset(chronic)?;
    let mut chosen = BTreeSet::new();
    let mut trace = Vec::new();
    let mut reward_sum = 0.0;
    let n_lines = engine.grid().n_lines();
    while !env.is_done() {
        let action = agent.act(&window, engine, &mut rng)?;
        if is_critical(window.latest(), env_cfg.eta) {
            report.critical_steps += 1;
            match action {
                Action::DoNothing => report.do_nothing += 1,
                Action::Reconnect(_) => report.reconnects += 1,
                Action::Remove(_) => report.removals += 1,
            }
        }
        if action.is_switch() {
            chosen.insert(action.encode(n_lines));
        }
        let out = env.step(action)?;
        reward_sum += out.reward;
        trace.push(TraceRecord {
            step: out.info.step,
            action: out.info.applied_action.encode(n_lines),
            reward: out.reward,
            rho_max: out.next.latest().max_rho(),
            done: out.done,
            blackout: out.info.blackout,
        });
        if out.info.blackout {
            report.blackout = true;
            report.survival_time = out.info.step;
        }
        window = out.next;
    }
    report.unique_actions = chosen.len();
    report.mean_reward = if trace.is_empty() { 0.0 } else { reward_sum / trace.len() as f64 };
    Ok((report, trace))
}

/// Per-episode seed derived from the evaluation seed and the episode position.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Evaluates `agent` on every chronic in parallel, preserving input order.
pub fn evaluate_traced(
    agent: &Agent,
    engine: &Arc<GridEngine>,
    chronics: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<(EvalReport, Vec<Vec<TraceRecord>>)> {
    let results: Vec<_> = chronics
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_episode(agent, engine, env_cfg, Arc::clone(c), episode_seed(seed, i)))
        .collect::<Result<_>>()?;
    let (episodes, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = EvalReport::from_episodes(agent.name(), engine.grid().n_actions(), episodes);
    Ok((report, traces))
}

pub fn evaluate(
    agent: &Agent,
    engine: &Arc<GridEngine>,
    chronics: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate_traced(agent, engine, chronics, env_cfg, seed)?.0)
}

/// Paired evaluation of several agents on the same episodes and seed.
pub fn compare(
    agents: &[Agent],
    engine: &Arc<GridEngine>,
    chronics: &[Arc<EpisodeChronic>],
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    agents.iter().map(|a| evaluate(a, engine, chronics, env_cfg, seed)).collect()
}
