//! Run configuration: TOML file merged under command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tastenet_core::evaluation::{DEFAULT_HOLDOUT, DEFAULT_REPETITIONS};
use tastenet_core::network::DEFAULT_DISPLAY_CUTOFF;
use tastenet_core::similarity::DEFAULT_OVERLAP_THRESHOLD;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_K: &[&str] = &["1", "3", "5", "10", "15", "20", "30", "50", "N-1"];
pub const DEFAULT_RHO: &[f64] = &[0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub filter: FilterConfig,
    pub grid: GridConfig,
    pub evaluation: EvaluationConfig,
    pub network: NetworkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            threads: None,
            out: PathBuf::from("out"),
            input: None,
            filter: FilterConfig::default(),
            grid: GridConfig::default(),
            evaluation: EvaluationConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_item_reviews: usize,
    pub min_rater_ratings: usize,
    pub protected_groups: Vec<String>,
    /// Accepted group labels; any other label is a data error.
    pub groups: Option<Vec<String>>,
}

/// A grid `k`: a number or `N-1` (everyone else).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KValue {
    Fixed(usize),
    Symbolic(String),
}

impl KValue {
    pub fn parse(s: &str) -> Result<KValue, CliError> {
        let s = s.trim();
        match s.parse::<usize>() {
            Ok(k) => Ok(KValue::Fixed(k)),
            Err(_) if is_crowd(s) => Ok(KValue::Symbolic(s.to_string())),
            Err(_) => Err(CliError::config(format!("bad k value '{s}' (expected a count or N-1)"))),
        }
    }

    pub fn resolve(&self, n_raters: usize) -> Result<usize, CliError> {
        let k = match self {
            KValue::Fixed(k) => *k,
            KValue::Symbolic(s) if is_crowd(s) => n_raters.saturating_sub(1),
            KValue::Symbolic(s) => return Err(CliError::config(format!("bad k value '{s}'"))),
        };
        if k == 0 {
            return Err(CliError::config("k must be at least 1"));
        }
        Ok(k)
    }
}

fn is_crowd(s: &str) -> bool {
    matches!(s.replace(' ', "").as_str(), "N-1" | "n-1")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub k: Vec<KValue>,
    pub rho: Vec<f64>,
    /// `all` or group names joined with `+`; empty means `all` plus one
    /// pool per group.
    pub pools: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            k: DEFAULT_K.iter().map(|s| KValue::parse(s).expect("default grid")).collect(),
            rho: DEFAULT_RHO.to_vec(),
            pools: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub holdout: usize,
    pub repetitions: usize,
    pub overlap_threshold: usize,
    pub skip_negative: bool,
    pub targets: String,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            holdout: DEFAULT_HOLDOUT,
            repetitions: DEFAULT_REPETITIONS,
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            skip_negative: false,
            targets: "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub k: usize,
    pub rho: f64,
    pub pool: String,
    pub min_weight: f64,
    pub coupled_holdout: bool,
    /// Items for per-item networks in `report`; empty picks the most rated.
    pub items: Vec<String>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            k: 5,
            rho: 1.0,
            pool: "all".into(),
            min_weight: DEFAULT_DISPLAY_CUTOFF,
            coupled_holdout: false,
            items: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.k.is_empty() || self.grid.rho.is_empty() {
            return Err(CliError::config("grid is empty"));
        }
        if self.grid.rho.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CliError::config("rho values must be finite and non-negative"));
        }
        if self.evaluation.repetitions == 0 {
            return Err(CliError::config("repetitions must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(())
    }
}

pub fn parse_k_list(s: &str) -> Result<Vec<KValue>, CliError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(KValue::parse).collect()
}

pub fn parse_rho_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad rho value '{p}'")))
        })
        .collect()
}
