//! Episodic grid MDP driven by load/generation chronics.

mod chronics;
mod environment;
pub mod reward;
mod trace;

pub use chronics::{load_chronics, write_chronics, EpisodeChronic};
pub use environment::{
    is_critical, survival_time, EnvConfig, Environment, MdpState, StepInfo, StepOutcome,
};
pub use reward::compute_reward;
pub use trace::{read_trace_jsonl, write_trace_jsonl, TraceRecord};
