//! Discrete-event model of edge and fog nodes driving the ledger, plus the
//! memory, throughput and latency benchmark harness.
//!
//! Simulation time here is kept in microseconds so that service intervals
//! like 1/121.7 s stay exact enough; the ledger clock is the same instant
//! floored to milliseconds.

mod bench;
mod engine;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{run_benchmark, saturation, write_metrics_csv, Saturation};
pub use engine::{run_sim, Scenario, SimOutcome, TraceEvent, TraceKind};

use crate::identity::IdentityError;
use crate::ledger::LedgerError;

/// Microseconds of simulated time.
pub type Micros = u64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event at {at}us scheduled before current time {now}us")]
    Causality { now: Micros, at: Micros },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Fog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: String,
    pub tier: Tier,
    pub service_rate_tps: f64,
    pub link_delay_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    /// Fog node running the ordering service.
    pub orderer: String,
}

impl Default for Topology {
    fn default() -> Self {
        Topology::new(4, 2)
    }
}

impl Topology {
    /// `edges` smart meters at 60 tps / 20 ms and `fogs` endorsing peers at
    /// 175 tps / 5 ms; the first fog hosts the orderer.
    pub fn new(edges: usize, fogs: usize) -> Self {
        let edge = (0..edges).map(|i| NodeSpec {
            node_id: format!("edge-{i}"),
            tier: Tier::Edge,
            service_rate_tps: 60.0,
            link_delay_ms: 20.0,
        });
        let fog = (0..fogs).map(|i| NodeSpec {
            node_id: format!("fog-{i}"),
            tier: Tier::Fog,
            service_rate_tps: 175.0,
            link_delay_ms: 5.0,
        });
        Topology {
            nodes: edge.chain(fog).collect(),
            orderer: "fog-0".into(),
        }
    }

    pub fn tier(&self, tier: Tier) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(move |n| n.tier == tier)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for n in &self.nodes {
            if !(n.service_rate_tps > 0.0 && n.service_rate_tps.is_finite()) || !(n.link_delay_ms >= 0.0) {
                return Err(SimError::Config(format!("node {} needs a positive rate and delay", n.node_id)));
            }
        }
        let orderer_ok = self
            .nodes
            .iter()
            .any(|n| n.node_id == self.orderer && n.tier == Tier::Fog);
        if !orderer_ok {
            return Err(SimError::Config(format!("orderer {} is not a fog node", self.orderer)));
        }
        if self.tier(Tier::Edge).next().is_none() {
            return Err(SimError::Config("topology needs at least one edge node".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CredentialMode {
    Nft,
    Certificate,
}

impl std::fmt::Display for CredentialMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CredentialMode::Nft => "nft",
            CredentialMode::Certificate => "certificate",
        })
    }
}

impl std::str::FromStr for CredentialMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "nft" => Ok(CredentialMode::Nft),
            "certificate" => Ok(CredentialMode::Certificate),
            other => Err(SimError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredentialModel {
    pub mode: CredentialMode,
    pub cert_bytes: u64,
    pub keypair_bytes: u64,
    pub partial_key_bytes: u64,
    /// Extra bytes a certificate-mode transaction carries.
    pub tx_overhead_bytes: u64,
    /// Relative verification work per transaction.
    pub verify_cost_factor: f64,
    /// Transaction size that node service rates are quoted for.
    pub base_tx_bytes: u64,
}

impl CredentialModel {
    pub fn nft() -> Self {
        CredentialModel {
            mode: CredentialMode::Nft,
            cert_bytes: 512,
            keypair_bytes: 1024,
            partial_key_bytes: 1024,
            tx_overhead_bytes: 0,
            verify_cost_factor: 1.0,
            base_tx_bytes: 1024,
        }
    }

    pub fn certificate() -> Self {
        CredentialModel {
            mode: CredentialMode::Certificate,
            tx_overhead_bytes: 256,
            verify_cost_factor: 1.15,
            ..Self::nft()
        }
    }

    pub fn for_mode(mode: CredentialMode) -> Self {
        match mode {
            CredentialMode::Nft => Self::nft(),
            CredentialMode::Certificate => Self::certificate(),
        }
    }

    pub fn per_device_bytes(&self) -> u64 {
        match self.mode {
            CredentialMode::Nft => self.partial_key_bytes,
            CredentialMode::Certificate => self.cert_bytes + self.keypair_bytes,
        }
    }

    /// Multiplier on per-transaction service time.
    pub fn cost_multiplier(&self) -> f64 {
        self.verify_cost_factor * (1.0 + self.tx_overhead_bytes as f64 / self.base_tx_bytes as f64)
    }

    pub fn effective_rate(&self, node: &NodeSpec) -> f64 {
        node.service_rate_tps / self.cost_multiplier()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.verify_cost_factor > 0.0 && self.verify_cost_factor.is_finite()) || self.base_tx_bytes == 0 {
            return Err(SimError::Config("verify_cost_factor and base_tx_bytes must be positive".into()));
        }
        Ok(())
    }
}

/// Total credential storage for `n_devices` under `model`.
pub fn memory_footprint(n_devices: u64, model: &CredentialModel) -> u64 {
    n_devices * model.per_device_bytes()
}

/// Everything a simulation run needs besides its workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: Topology,
    pub credential: CredentialModel,
    pub block_max_txs: usize,
    pub block_timeout_ms: u64,
    pub commit_delay_ms: u64,
    /// Latency charged to a transaction the network dropped: the client
    /// waits this long before giving up.
    pub client_timeout_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: Topology::default(),
            credential: CredentialModel::nft(),
            block_max_txs: 10,
            block_timeout_ms: 500,
            commit_delay_ms: 1000,
            client_timeout_ms: 60_000.0,
        }
    }
}

impl SimConfig {
    pub fn with_mode(mut self, mode: CredentialMode) -> Self {
        self.credential = CredentialModel::for_mode(mode);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.topology.validate()?;
        self.credential.validate()?;
        if self.block_max_txs == 0 {
            return Err(SimError::Config("block_max_txs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: CredentialMode,
    pub send_rate_tps: f64,
    pub achieved_throughput_tps: f64,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub committed_tx_count: u64,
    pub failed_tx_count: u64,
    pub storage_bytes: u64,
}

pub fn write_metrics_json<W: Write>(writer: W, metrics: &[Metrics]) -> Result<(), SimError> {
    serde_json::to_writer_pretty(writer, metrics).map_err(std::io::Error::from)?;
    Ok(())
}
