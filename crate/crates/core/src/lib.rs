//! Desk-scale simulator of a decentralised demand-flexibility aggregator.
//!
//! * [`identity`]: certificate-less device identity backed by ledger tokens.
//! * [`ledger`]: endorsing/ordering/committing pipeline over a hash-chained block log.
//! * [`aggregator`]: CSP model of flexible resources, market clearing and DR scheduling.
//! * [`workflow`]: the four-step trading workflow with publish/subscribe notifications.
//! * [`telemetry`]: dataset ingestion, flexibility estimation, FDI/MadIoT injection and tamper detection.
//! * [`simnet`]: discrete-event network model and the throughput/latency/footprint benchmark.

pub mod digest;
pub mod identity;
pub mod ledger;
pub mod aggregator;
pub mod simnet;
pub mod telemetry;
pub mod workflow;

/// Simulated time in milliseconds. One tick is one simulated millisecond.
pub type SimTime = u64;
