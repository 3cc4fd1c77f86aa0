//! Declarative run configuration: a flat key = value TOML file with CLI
//! overrides, plus the provenance hash embedded in every output.

use anyhow::{bail, Context, Result};
use gdvar::bootstrap::ForecastSettings;
use gdvar::dist::FamilyKind;
use gdvar::estimate::FitOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

fn default_family() -> String {
    "wpd".into()
}
fn default_window() -> usize {
    1456
}
fn default_horizon() -> usize {
    244
}
fn default_levels() -> Vec<f64> {
    (0..10).map(|i| 0.90 + 0.01 * i as f64).collect()
}
fn default_grid_cells() -> usize {
    100
}
fn default_bootstrap_iters() -> usize {
    1000
}
fn default_seed() -> u64 {
    42
}
fn default_refit_every() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_restarts() -> usize {
    3
}
fn default_max_iterations() -> usize {
    1500
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_dq_lags() -> usize {
    4
}
fn default_c_bound() -> f64 {
    5.0
}
fn default_mcs_level() -> f64 {
    0.15
}
fn default_mcs_boot() -> usize {
    5000
}

/// Resolved run configuration. Serialized (canonically) into the config
/// hash recorded on every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default)]
    pub calendar: Option<PathBuf>,
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default)]
    pub slots_per_day: Option<usize>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_grid_cells")]
    pub grid_cells: usize,
    #[serde(default = "default_bootstrap_iters")]
    pub bootstrap_iters: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_refit_every")]
    pub refit_every: usize,
    #[serde(default = "default_true")]
    pub discretize: bool,
    #[serde(default = "default_true")]
    pub adjust_calendar: bool,
    #[serde(default = "default_true")]
    pub seasonal: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Box bound for the score-loading coefficients C1, C2.
    #[serde(default = "default_c_bound")]
    pub c_bound: f64,
    #[serde(default = "default_dq_lags")]
    pub dq_lags: usize,
    #[serde(default = "default_mcs_level")]
    pub mcs_level: f64,
    #[serde(default = "default_mcs_boot")]
    pub mcs_bootstrap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config populates defaults")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("bad config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(cfg)
    }

    pub fn family_kind(&self) -> Result<FamilyKind> {
        FamilyKind::parse(&self.family).map_err(|e| anyhow::anyhow!(e))
    }

    pub fn validate(&self) -> Result<()> {
        for &lv in &self.levels {
            if !(lv > 0.0 && lv < 1.0) {
                bail!("level {lv} outside (0,1)");
            }
        }
        if self.levels.is_empty() {
            bail!("at least one level is required");
        }
        if self.grid_cells < 2 {
            bail!("grid_cells must be at least 2");
        }
        if self.bootstrap_iters < 1 {
            bail!("bootstrap_iters must be at least 1");
        }
        if self.refit_every < 1 {
            bail!("refit_every must be at least 1");
        }
        if !(self.c_bound > 0.0) {
            bail!("c_bound must be positive");
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut options = FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed: self.seed,
            ..FitOptions::default()
        };
        options.bounds.lo[2] = -self.c_bound;
        options.bounds.hi[2] = self.c_bound;
        options.bounds.lo[5] = -self.c_bound;
        options.bounds.hi[5] = self.c_bound;
        options
    }

    pub fn forecast_settings(&self) -> ForecastSettings {
        ForecastSettings {
            grid_cells: self.grid_cells,
            bootstrap_iters: self.bootstrap_iters,
            discretize: self.discretize,
            retain_simulations: false,
        }
    }

    /// Hash of the canonical (JSON) serialization of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        hex_prefix(&digest, 16)
    }
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

/// Provenance line embedded at the top of CSV outputs and inside JSON meta.
pub fn meta_line(cfg: &RunConfig) -> String {
    format!(
        "# config_hash={} seed={} version={} generator={} mode={}",
        cfg.hash(),
        cfg.seed,
        env!("CARGO_PKG_VERSION"),
        gdvar::rng::GENERATOR_ID,
        gdvar::exec::mode()
    )
}
