//! Privacy configuration from flags, an optional TOML file and the
//! environment. Precedence: flag, then file, then `DPCOUNT_SEED` (seed only),
//! then defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dpcount::mechanisms::PrivacyBudget;
use serde::{Deserialize, Serialize};

use crate::error::{config, io, Result};

/// Environment variable holding the default noise seed.
pub const SEED_ENV: &str = "DPCOUNT_SEED";

pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Pure,
    Approx,
}

/// What a count measures. `document` counts each document at most once
/// (`Δ = 1`); `substring` counts every occurrence (`Δ = ℓ` unless capped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Substring,
    Document,
    Qgram,
    Treecount,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub cap: Option<usize>,
    pub seed: Option<u64>,
    pub zero_noise: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrivacyArgs {
    /// TOML file with any of `epsilon`, `delta`, `beta`, `cap`, `seed`, `zero_noise`.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// `pure` needs delta = 0, `approx` needs delta > 0. Defaults from delta.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Failure probability of the reported error bounds.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Per-document contribution cap Δ.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Noise seed. Falls back to the config file, then $DPCOUNT_SEED, then OS entropy.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace every noise draw by 0. The output is NOT private.
    #[arg(long)]
    pub zero_noise: bool,
}

/// Resolved privacy settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Privacy {
    pub mode: ModeArg,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub cap: Option<usize>,
    pub seed: u64,
    pub zero_noise: bool,
}

impl PrivacyArgs {
    /// Merges flags, the config file and `env_seed` (the value of
    /// [`SEED_ENV`], if set).
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<Privacy> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let delta = self.delta.or(file.delta);
        let mode = match (self.mode, delta) {
            (Some(m), _) => m,
            (None, Some(d)) if d > 0.0 => ModeArg::Approx,
            (None, _) => ModeArg::Pure,
        };
        let delta = match (mode, delta) {
            (ModeArg::Pure, None) => 0.0,
            (ModeArg::Pure, Some(d)) if d != 0.0 => {
                return Err(config(format!("pure mode requires delta = 0, got {d}")))
            }
            (ModeArg::Approx, None) | (ModeArg::Approx, Some(0.0)) => {
                return Err(config("approx mode requires delta > 0"))
            }
            (_, Some(d)) => d,
        };
        let seed = match (self.seed.or(file.seed), env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| config(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer")))?,
            (None, None) => rand::random(),
        };
        Ok(Privacy {
            mode,
            epsilon: self.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            delta,
            beta: self.beta.or(file.beta).unwrap_or(DEFAULT_BETA),
            cap: self.cap.or(file.cap),
            seed,
            zero_noise: self.zero_noise || file.zero_noise.unwrap_or(false),
        })
    }
}

impl Privacy {
    /// The cap Δ used for `task` on documents of length at most `ell`.
    pub fn resolve_cap(&self, task: Task, ell: usize) -> Result<usize> {
        match (task, self.cap) {
            (Task::Document, None | Some(1)) => Ok(1),
            (Task::Document, Some(c)) => Err(config(format!(
                "the document task counts each document once (cap 1), got cap {c}"
            ))),
            (Task::Treecount, c) => Ok(c.unwrap_or(1)),
            (_, None) => Ok(ell.max(1)),
            (_, Some(c)) => Ok(c),
        }
    }

    pub fn budget(&self, task: Task, ell: usize) -> Result<PrivacyBudget> {
        let cap = self.resolve_cap(task, ell)?;
        Ok(PrivacyBudget::new(self.epsilon, self.delta, self.beta, cap)?)
    }
}
