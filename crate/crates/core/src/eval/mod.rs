//! Synthetic chronics, scenario splits and survival-time evaluation.

mod evaluate;
mod scenario;

pub use evaluate::{
    compare, episode_seed, evaluate, evaluate_traced, format_table, run_episode, write_comparison_csv,
    EpisodeReport, EvalReport, TABLE_HEADER,
};
pub use scenario::{
    diurnal, generate_chronics, generate_dir, load_chronics_dir, write_chronics_dir, ChronicsManifest,
    ChronicsSet, ManifestEntry, ProfileConfig, ScenarioSplit, MANIFEST_FILE, MONTHLY_SCALE,
};
