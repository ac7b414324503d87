//! Scenario files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use plexisim::aggregator::{Bid, FlexRequest, FlexResource};
use plexisim::simnet::SimConfig;
use plexisim::telemetry::{AttackProfile, LinearEstimator};

/// A bid addressed to one request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBid {
    pub request_id: String,
    #[serde(flatten)]
    pub bid: Bid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub sim: SimConfig,
    /// Simulated send phase per benchmark rate.
    #[serde(default = "default_duration")]
    pub bench_duration_s: f64,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_days: Option<usize>,
    #[serde(default)]
    pub estimator: LinearEstimator,
    #[serde(default)]
    pub attacks: Vec<AttackProfile>,
    #[serde(default)]
    pub resources: Vec<FlexResource>,
    #[serde(default)]
    pub requests: Vec<FlexRequest>,
    #[serde(default)]
    pub bids: Vec<ScenarioBid>,
}

fn default_duration() -> f64 {
    10.0
}

impl ScenarioConfig {
    /// An empty scenario seeded with `seed`.
    pub fn with_seed(seed: u64) -> Self {
        ScenarioConfig {
            seed,
            out_dir: None,
            sim: SimConfig::default(),
            bench_duration_s: default_duration(),
            dataset: None,
            synthetic_days: None,
            estimator: LinearEstimator::default(),
            attacks: Vec::new(),
            resources: Vec::new(),
            requests: Vec::new(),
            bids: Vec::new(),
        }
    }

    /// Reads `path`; relative paths inside are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.estimator.validate()?;
        cfg.sim.validate()?;
        Ok(cfg)
    }
}
