use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridrl::agents::{Agent, AgentKind};
use gridrl::config::{load_grid, stress_profile, RunConfig};
use gridrl::dqn::{load_model, train, write_train_log, ClockMode, Exploration};
use gridrl::engine::GridEngine;
use gridrl::env::{is_critical, write_trace_jsonl, Environment, EpisodeChronic};
use gridrl::eval::{
    evaluate_traced, format_table, generate_dir, load_chronics_dir, write_comparison_csv, ChronicsSet,
};
use gridrl::grid::Action;
use gridrl::policy::{construct_effective_set, Physics};

#[derive(Parser)]
#[command(name = "gridrl", version, about = "Grid line-switching simulator, trainer and evaluator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in case (ieee14, ieee30, triangle) or path to a grid JSON file.
    #[arg(long, default_value = "ieee14")]
    grid: String,
    /// TOML or JSON file with [env], [train] and [profile] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Switching-cost weight in the reward.
    #[arg(long)]
    mu_line: Option<f64>,
    /// Critical-state threshold on max rho.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExplorationArg {
    Canonical,
    Physics,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Default,
    Stress,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic chronics and a train/validation/test split.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output chronics directory.
        #[arg(long)]
        out: PathBuf,
        /// Base profile, overridden by the [profile] table of --config.
        #[arg(long, value_enum, default_value = "default")]
        profile: ProfileArg,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 2)]
        test_per_month: usize,
        #[arg(long, default_value_t = 12)]
        validation: usize,
    },
    /// Train a DQN agent on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chronics_dir: PathBuf,
        #[arg(long, value_enum, default_value = "physics")]
        exploration: ExplorationArg,
        #[arg(long)]
        budget_seconds: Option<f64>,
        /// Hyperparameter preset: 36bus, 118bus-a or 118bus-b.
        #[arg(long)]
        preset: Option<String>,
        /// Measure the budget in real time instead of the reproducible step clock.
        #[arg(long)]
        wall_clock: bool,
        /// Output directory for checkpoint.json and train_log.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one agent and write per-episode rows and traces.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chronics_dir: PathBuf,
        /// do_nothing, reconnection, random, random_explore_rl or physics_guided_rl.
        #[arg(long, default_value = "physics_guided_rl")]
        agent: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the LODF matrix and effective set at one step of a do-nothing run.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chronics_dir: Option<PathBuf>,
        #[arg(long)]
        episode: Option<String>,
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Paired evaluation of several agents into a comparison CSV.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chronics_dir: PathBuf,
        /// `kind` or `kind=checkpoint.json`; repeat or comma-separate.
        #[arg(long = "agent", required = true, value_delimiter = ',')]
        agents: Vec<String>,
        #[arg(long, default_value = "line")]
        action_space: String,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

struct Setup {
    grid_name: String,
    engine: Arc<GridEngine>,
    config: RunConfig,
    seed: u64,
}

fn setup(common: &Common) -> anyhow::Result<Setup> {
    let grid = load_grid(&common.grid)?;
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(mu) = common.mu_line {
        config.env.mu_line = mu;
    }
    if let Some(eta) = common.eta {
        config.env.eta = eta;
    }
    config.env.validate()?;
    let seed = common.seed.unwrap_or(config.train.seed);
    Ok(Setup {
        grid_name: common.grid.clone(),
        engine: Arc::new(GridEngine::new(grid)),
        config,
        seed,
    })
}

fn split_of(set: &ChronicsSet, split: SplitArg) -> anyhow::Result<Vec<Arc<EpisodeChronic>>> {
    let eps = match split {
        SplitArg::Train => set.train()?,
        SplitArg::Validation => set.validation()?,
        SplitArg::Test => set.test()?,
    };
    if eps.is_empty() {
        bail!("the selected split is empty");
    }
    Ok(eps)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn build_agent(spec: &str, checkpoint: Option<&Path>, s: &Setup) -> anyhow::Result<Agent> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) => (n, Some(PathBuf::from(p))),
        None => (spec, checkpoint.map(Path::to_path_buf)),
    };
    let kind: AgentKind = name.parse()?;
    let env = &s.config.env;
    if kind.needs_checkpoint() {
        let Some(path) = path else {
            bail!("agent {kind} needs a checkpoint");
        };
        let model = load_model(&path, s.engine.grid(), env.kappa)?;
        Ok(Agent::learned(kind, Arc::new(model), env.mu_line, env.eta))
    } else {
        Ok(Agent::baseline(kind, env.mu_line, env.eta)?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common, out, profile, episodes, horizon, test_per_month, validation } => {
            let s = setup(&common)?;
            let mut cfg = match (&common.config, profile) {
                (Some(_), _) => s.config.profile.clone(),
                (None, ProfileArg::Stress) => stress_profile(),
                (None, ProfileArg::Default) => Default::default(),
            };
            if let Some(n) = episodes {
                cfg.n_episodes = n;
            }
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            let m = generate_dir(&out, &s.grid_name, s.engine.grid(), &cfg, test_per_month, validation, s.seed)?;
            println!(
                "wrote {} episodes to {} (train {}, validation {}, test {})",
                m.episodes.len(),
                out.display(),
                m.split.train.len(),
                m.split.validation.len(),
                m.split.test.len()
            );
        }
        Command::Train { common, chronics_dir, exploration, budget_seconds, preset, wall_clock, out } => {
            let s = setup(&common)?;
            let mut cfg = s.config.train.clone();
            if let Some(p) = preset {
                if common.config.is_some() {
                    bail!("--preset and --config are mutually exclusive");
                }
                cfg = gridrl::dqn::TrainConfig::preset(&p)?;
            }
            cfg.seed = s.seed;
            if let Some(b) = budget_seconds {
                cfg.budget_seconds = b;
            }
            if wall_clock {
                cfg.clock = ClockMode::Wall;
            }
            let exploration = match exploration {
                ExplorationArg::Canonical => Exploration::Canonical,
                ExplorationArg::Physics => Exploration::Physics,
            };
            let set = load_chronics_dir(&chronics_dir, s.engine.grid())?;
            let train_eps = split_of(&set, SplitArg::Train)?;
            let val_eps = set.validation()?;
            create_dir(&out)?;
            let result = train(&s.engine, &train_eps, &val_eps, &s.config.env, &cfg, exploration)?;
            result.model.to_checkpoint(s.engine.grid()).save(out.join("checkpoint.json"))?;
            write_train_log(out.join("train_log.csv"), &result.log)?;
            println!(
                "{} exploration: {} interactions, {} updates, {} episodes; best validation ST {}",
                exploration,
                result.interactions,
                result.updates,
                result.log.len(),
                result.best_validation_st.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
            );
        }
        Command::Evaluate { common, chronics_dir, agent, checkpoint, split, out } => {
            let s = setup(&common)?;
            let agent = build_agent(&agent, checkpoint.as_deref(), &s)?;
            let set = load_chronics_dir(&chronics_dir, s.engine.grid())?;
            let eps = split_of(&set, split)?;
            let (report, traces) = evaluate_traced(&agent, &s.engine, &eps, &s.config.env, s.seed)?;
            create_dir(&out.join("traces"))?;
            for (ep, trace) in report.episodes.iter().zip(&traces) {
                write_trace_jsonl(out.join("traces").join(format!("{}.jsonl", ep.id)), trace)?;
            }
            report.write_episodes_csv(out.join("episodes.csv"))?;
            let json = serde_json::to_string_pretty(&report)?;
            let path = out.join("report.json");
            std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
            print!("{}", format_table("line", std::slice::from_ref(&report)));
        }
        Command::Inspect { common, chronics_dir, episode, step } => {
            let s = setup(&common)?;
            inspect(&s, chronics_dir.as_deref(), episode.as_deref(), step)?;
        }
        Command::Compare { common, chronics_dir, agents, action_space, split, out } => {
            let s = setup(&common)?;
            let set = load_chronics_dir(&chronics_dir, s.engine.grid())?;
            let eps = split_of(&set, split)?;
            let mut reports = Vec::new();
            for spec in &agents {
                let agent = build_agent(spec, None, &s)?;
                let (report, _) = evaluate_traced(&agent, &s.engine, &eps, &s.config.env, s.seed)?;
                reports.push(report);
            }
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            write_comparison_csv(&out, &action_space, &reports)?;
            print!("{}", format_table(&action_space, &reports));
        }
    }
    Ok(())
}

fn inspect(s: &Setup, chronics_dir: Option<&Path>, episode: Option<&str>, step: usize) -> anyhow::Result<()> {
    let grid = s.engine.grid();
    let chronic = match chronics_dir {
        Some(dir) => {
            let set = load_chronics_dir(dir, grid)?;
            let id = match episode {
                Some(id) => id.to_string(),
                None => set.episodes.keys().next().cloned().context("chronics directory is empty")?,
            };
            Arc::clone(set.episodes.get(&id).with_context(|| format!("no episode {id}"))?)
        }
        None => {
            let load: Vec<f64> = grid.loads().iter().map(|l| l.nominal_p).collect();
            let rows = step + 2;
            Arc::new(EpisodeChronic {
                id: "nominal".into(),
                month: None,
                gen_p: vec![vec![0.0; grid.generators().len()]; rows],
                load_p: vec![load; rows],
            })
        }
    };
    let mut env = Environment::new(Arc::clone(&s.engine), s.config.env.clone())?;
    env.reset(chronic)?;
    while env.state().step < step {
        if env.is_done() {
            bail!("episode ended before step {step}");
        }
        env.step(Action::DoNothing)?;
    }
    let state = env.state();
    println!("step {}  max rho {:.4}  critical {}", state.step, state.max_rho(), is_critical(state, s.config.env.eta));
    println!("line  from  to    flow_mw    limit    rho     status");
    for (l, line) in grid.lines().iter().enumerate() {
        println!(
            "{:<5} {:<5} {:<5} {:>9.3} {:>8.3} {:>7.4}  {}",
            l,
            line.from_bus,
            line.to_bus,
            state.flow[l],
            line.flow_limit,
            state.rho[l],
            if state.line_status[l] { "in" } else { "out" }
        );
    }
    let physics = Physics::new(&s.engine, state, s.config.env.mu_line)?;
    println!("\nLODF (row = monitored line, column = outage; '--' marks islanding or out-of-service outages)");
    for l in 0..grid.n_lines() {
        let row: Vec<String> = (0..grid.n_lines())
            .map(|k| physics.lodf.get(l, k).map_or_else(|| "   --".to_string(), |v| format!("{v:6.3}")))
            .collect();
        println!("{l:>3} {}", row.join(" "));
    }
    let set = construct_effective_set(state, grid, &physics.lodf);
    println!("\nmost loaded line: {:?}", set.l_max);
    println!("effective set ({} actions):", set.len());
    for a in &set.actions {
        let est = physics.estimate(state, *a).map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"));
        println!("  {a:?}  estimated raw reward {est}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
