//! Run configuration files. A file may hold `[env]`, `[train]` and
//! `[profile]` tables whose keys are the field names of [`EnvConfig`],
//! [`TrainConfig`] and [`ProfileConfig`]; missing keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dqn::TrainConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::ProfileConfig;
use crate::grid::{cases, GridModel};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub profile: ProfileConfig,
}

impl RunConfig {
    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Synthetic 14-bus stress profile: nominal demand with 2% AR(1) noise and a
/// 30% daily swing, enough for unattended operation to black out on most
/// winter and summer days.
pub fn stress_profile() -> ProfileConfig {
    ProfileConfig {
        n_episodes: 96,
        horizon: 288,
        load_scale: 1.0,
        diurnal_amplitude: 0.3,
        noise_sigma: 0.02,
        ..ProfileConfig::default()
    }
}

/// Resolves a built-in case name or a JSON grid file.
pub fn load_grid(spec: &str) -> Result<GridModel> {
    if let Some(g) = cases::by_name(spec) {
        return Ok(g);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such grid file or built-in case"),
        ));
    }
    GridModel::load_json(path)
}
