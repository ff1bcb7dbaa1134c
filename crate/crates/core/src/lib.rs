//! Cascading-failure transmission grid simulator with sensitivity-guided
//! line-switching reinforcement learning.
//!
//! The crate is layered bottom-up:
//! - [`grid`]: static network model, operating state, actions and legality
//! - [`powerflow`]: DC power flow
//! - [`sensitivity`]: PTDF/LODF factors and post-action flow/reward prediction
//! - [`engine`]: topology-cached solver shared by the environment and policies
//! - [`env`]: chronics, cascade dynamics, reward and the windowed MDP state
//! - [`policy`]: effective-set construction and the exploration/exploitation rules
//! - [`dqn`]: dueling Q-network, prioritized replay and the training loop
//! - [`agents`]: baseline and learned agents behind one interface
//! - [`eval`]: synthetic chronics, scenario splits and survival-time reports
//! - [`config`]: run configuration files and grid lookup

pub mod agents;
pub mod config;
pub mod dqn;
pub mod engine;
pub mod env;
pub mod error;
pub mod eval;
pub mod grid;
pub mod policy;
pub mod powerflow;
pub mod sensitivity;

pub use error::{Error, Result};
pub use grid::{legal_actions, legal_switches, Action, GridModel, SystemState, Topology};
