use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{load_chronics, write_chronics, EpisodeChronic};
use crate::error::{Error, Result};
use crate::grid::GridModel;

/// Default monthly demand multipliers, January first: winter and summer peaks.
pub const MONTHLY_SCALE: [f64; 12] = [1.15, 1.10, 1.00, 0.92, 0.88, 0.97, 1.08, 1.10, 0.95, 0.90, 1.00, 1.12];

/// Shape of synthetic demand trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub n_episodes: usize,
    /// Steps per episode.
    pub horizon: usize,
    pub step_minutes: f64,
    /// Multiplier applied to every nominal load.
    pub load_scale: f64,
    pub monthly_scale: [f64; 12],
    /// Relative swing of the daily cosine around its mean.
    pub diurnal_amplitude: f64,
    /// Hour of the daily peak.
    pub peak_hour: f64,
    /// Clock hour of step 0.
    pub start_hour: f64,
    /// Standard deviation in hours of the per-load shift of the daily curve.
    pub phase_jitter_hours: f64,
    /// AR(1) coefficient of the multiplicative noise.
    pub noise_ar: f64,
    /// Innovation standard deviation of the multiplicative noise.
    pub noise_sigma: f64,
    /// Half-width of the per-episode, per-generator dispatch perturbation.
    pub gen_mix_jitter: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            n_episodes: 48,
            horizon: 288,
            step_minutes: 5.0,
            load_scale: 1.0,
            monthly_scale: MONTHLY_SCALE,
            diurnal_amplitude: 0.2,
            peak_hour: 18.0,
            start_hour: 0.0,
            phase_jitter_hours: 1.5,
            noise_ar: 0.95,
            noise_sigma: 0.01,
            gen_mix_jitter: 0.0,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 || self.n_episodes == 0 {
            return Err(Error::Config("need at least one episode of two or more steps".into()));
        }
        if !(self.diurnal_amplitude >= 0.0 && self.diurnal_amplitude < 1.0) {
            return Err(Error::Config("diurnal amplitude must lie in [0, 1)".into()));
        }
        if !(self.noise_ar.abs() < 1.0) || self.noise_sigma < 0.0 || !(0.0..1.0).contains(&self.gen_mix_jitter) {
            return Err(Error::Config("invalid noise parameters".into()));
        }
        Ok(())
    }

    /// Month (1..=12) assigned to episode `i`: episodes cycle through the year.
    pub fn month_of(&self, i: usize) -> u32 {
        (i % 12) as u32 + 1
    }
}

/// Daily load curve factor at `hour`.
pub fn diurnal(hour: f64, amplitude: f64, peak_hour: f64) -> f64 {
    1.0 + amplitude * (2.0 * PI * (hour - peak_hour) / 24.0).cos()
}

/// Synthetic episodes for `grid`: nominal load x scale x month x daily curve
/// x AR(1) noise per load, with generation dispatched in proportion to
/// capacity (optionally perturbed per episode). Deterministic in `seed`.
pub fn generate_chronics(grid: &GridModel, cfg: &ProfileConfig, seed: u64) -> Result<Vec<EpisodeChronic>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_loads = grid.loads().len();
    let n_gens = grid.generators().len();
    let jitter = Normal::new(0.0, cfg.phase_jitter_hours.max(0.0)).expect("finite sigma");
    // shifts are fixed per load so that episodes differ only by month and noise
    let shifts: Vec<f64> = (0..n_loads).map(|_| jitter.sample(&mut rng)).collect();
    let innovation = Normal::new(0.0, cfg.noise_sigma).expect("finite sigma");
    let pmax_total: f64 = grid.generators().iter().map(|g| g.pmax).sum();

    let mut out = Vec::with_capacity(cfg.n_episodes);
    for e in 0..cfg.n_episodes {
        let month = cfg.month_of(e);
        let season = cfg.monthly_scale[month as usize - 1];
        let mut noise = vec![0.0; n_loads];
        let mix: Vec<f64> = (0..n_gens)
            .map(|g| {
                let f = if cfg.gen_mix_jitter > 0.0 {
                    1.0 + rng.random_range(-cfg.gen_mix_jitter..cfg.gen_mix_jitter)
                } else {
                    1.0
                };
                f * grid.generators()[g].pmax / pmax_total
            })
            .collect();
        let mix_total: f64 = mix.iter().sum();
        let mut load_p = Vec::with_capacity(cfg.horizon);
        let mut gen_p = Vec::with_capacity(cfg.horizon);
        for t in 0..cfg.horizon {
            let hour = cfg.start_hour + t as f64 * cfg.step_minutes / 60.0;
            let row: Vec<f64> = grid
                .loads()
                .iter()
                .enumerate()
                .map(|(d, load)| {
                    if cfg.noise_sigma > 0.0 {
                        noise[d] = cfg.noise_ar * noise[d] + innovation.sample(&mut rng);
                    }
                    let shape = diurnal(hour + shifts[d], cfg.diurnal_amplitude, cfg.peak_hour);
                    (load.nominal_p * cfg.load_scale * season * shape * (1.0 + noise[d])).max(0.0)
                })
                .collect();
            let total: f64 = row.iter().sum();
            gen_p.push(mix.iter().map(|m| total * m / mix_total).collect());
            load_p.push(row);
        }
        out.push(EpisodeChronic {
            id: format!("ep_{e:04}"),
            month: Some(month),
            gen_p,
            load_p,
        });
    }
    Ok(out)
}

/// Disjoint train / validation / test episode ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl ScenarioSplit {
    /// Random split in which the test set holds `test_per_month` episodes of
    /// every month present (fewer if a month has fewer episodes), and
    /// `n_validation` further episodes are held out for model selection.
    pub fn new(episodes: &[(String, Option<u32>)], test_per_month: usize, n_validation: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_month: BTreeMap<Option<u32>, Vec<&String>> = BTreeMap::new();
        for (id, month) in episodes {
            by_month.entry(*month).or_default().push(id);
        }
        let mut test = Vec::new();
        let mut rest = Vec::new();
        for ids in by_month.values_mut() {
            ids.shuffle(&mut rng);
            let k = test_per_month.min(ids.len());
            test.extend(ids[..k].iter().map(|s| s.to_string()));
            rest.extend(ids[k..].iter().map(|s| s.to_string()));
        }
        rest.shuffle(&mut rng);
        let n_val = n_validation.min(rest.len().saturating_sub(1));
        let validation = rest.drain(..n_val).collect::<Vec<_>>();
        let mut train = rest;
        test.sort();
        train.sort();
        let mut validation = validation;
        validation.sort();
        Self { train, validation, test }
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<&String> = self.train.iter().chain(&self.validation).chain(&self.test).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        all.len() == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub month: Option<u32>,
    pub file: String,
}

/// `manifest.json` of a chronics directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronicsManifest {
    pub grid: String,
    pub seed: u64,
    pub profile: ProfileConfig,
    pub episodes: Vec<ManifestEntry>,
    pub split: ScenarioSplit,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// A loaded chronics directory.
#[derive(Debug, Clone)]
pub struct ChronicsSet {
    pub manifest: ChronicsManifest,
    pub episodes: BTreeMap<String, Arc<EpisodeChronic>>,
}

impl ChronicsSet {
    pub fn select(&self, ids: &[String]) -> Result<Vec<Arc<EpisodeChronic>>> {
        ids.iter()
            .map(|id| {
                self.episodes
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("episode {id} listed in split but not present")))
            })
            .collect()
    }

    pub fn train(&self) -> Result<Vec<Arc<EpisodeChronic>>> {
        self.select(&self.manifest.split.train)
    }

    pub fn validation(&self) -> Result<Vec<Arc<EpisodeChronic>>> {
        self.select(&self.manifest.split.validation)
    }

    pub fn test(&self) -> Result<Vec<Arc<EpisodeChronic>>> {
        self.select(&self.manifest.split.test)
    }
}

pub fn write_chronics_dir(
    dir: impl AsRef<Path>,
    grid: &GridModel,
    chronics: &[EpisodeChronic],
    manifest_base: ChronicsManifest,
) -> Result<ChronicsManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = manifest_base;
    manifest.episodes.clear();
    for c in chronics {
        let file = format!("{}.csv", c.id);
        write_chronics(dir.join(&file), c, grid)?;
        manifest.episodes.push(ManifestEntry {
            id: c.id.clone(),
            month: c.month,
            file,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_chronics_dir(dir: impl AsRef<Path>, grid: &GridModel) -> Result<ChronicsSet> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ChronicsManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut episodes = BTreeMap::new();
    for entry in &manifest.episodes {
        let mut c = load_chronics(dir.join(&entry.file), grid)?;
        c.id = entry.id.clone();
        c.month = entry.month;
        episodes.insert(entry.id.clone(), Arc::new(c));
    }
    Ok(ChronicsSet { manifest, episodes })
}

/// Generates chronics, splits them and writes the directory in one go.
pub fn generate_dir(
    dir: impl AsRef<Path>,
    grid_name: &str,
    grid: &GridModel,
    cfg: &ProfileConfig,
    test_per_month: usize,
    n_validation: usize,
    seed: u64,
) -> Result<ChronicsManifest> {
    let chronics = generate_chronics(grid, cfg, seed)?;
    let ids: Vec<(String, Option<u32>)> = chronics.iter().map(|c| (c.id.clone(), c.month)).collect();
    let split = ScenarioSplit::new(&ids, test_per_month, n_validation, seed);
    let base = ChronicsManifest {
        grid: grid_name.to_string(),
        seed,
        profile: cfg.clone(),
        episodes: Vec::new(),
        split,
    };
    write_chronics_dir(dir, grid, &chronics, base)
}
