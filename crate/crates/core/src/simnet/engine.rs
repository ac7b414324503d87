//! The event loop.
//!
//! A transaction is submitted at an edge node, signed there, and sent to
//! every fog endorser. The fogs' endorsements go to the orderer, which
//! feeds the ledger's batching and commit pipeline. Nodes do not queue: a
//! node still busy one full service interval after an arrival drops the
//! transaction on the spot.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{memory_footprint, CredentialMode, Metrics, Micros, NodeSpec, SimConfig, SimError, Tier};
use crate::digest::Digest;
use crate::identity::{enroll, setup, DeviceKey, PufDevice};
use crate::ledger::{Ledger, LedgerConfig, Payload, Receipt, Transaction};

/// A workload: one client submission per entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arrivals_us: Vec<Micros>,
    /// Nominal offered load, reported in the metrics.
    pub send_rate_tps: f64,
    /// Length of the send phase, used to turn commits into throughput.
    pub duration_s: f64,
    pub record_trace: bool,
}

impl Scenario {
    /// Evenly spaced submissions at `rate_tps` for `duration_s` seconds.
    pub fn constant_rate(rate_tps: f64, duration_s: f64) -> Self {
        let n = (rate_tps * duration_s).round() as u64;
        let arrivals_us = (0..n)
            .map(|i| (i as f64 * 1e6 / rate_tps).round() as Micros)
            .collect();
        Scenario {
            arrivals_us,
            send_rate_tps: rate_tps,
            duration_s,
            record_trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Submit,
    Signed,
    Endorsed,
    Ordered,
    Committed,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_us: Micros,
    pub seq: u64,
    pub kind: TraceKind,
    pub tx: usize,
    pub node: String,
}

pub struct SimOutcome {
    pub metrics: Metrics,
    pub trace: Vec<TraceEvent>,
    pub ledger: Ledger,
    /// Client-observed latency per submission; dropped ones carry the timeout.
    pub latencies_ms: Vec<f64>,
}

impl SimOutcome {
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        for e in &self.trace {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Submit(usize),
    AtFog { tx: usize, fog: usize },
    EndorseDone(usize),
    AtOrderer(usize),
    BatchTimeout,
    Commit(usize),
}

/// A node's admission state.
struct Server {
    service_us: f64,
    busy_until: f64,
}

impl Server {
    fn new(node: &NodeSpec, cfg: &SimConfig) -> Self {
        Server {
            service_us: 1e6 / cfg.credential.effective_rate(node),
            busy_until: 0.0,
        }
    }

    /// Finish time if admitted, `None` if dropped.
    fn admit(&mut self, at: Micros) -> Option<f64> {
        let at = at as f64;
        let start = at.max(self.busy_until);
        if start - at > self.service_us + 1e-6 {
            return None;
        }
        self.busy_until = start + self.service_us;
        Some(self.busy_until)
    }
}

struct Sim {
    queue: BinaryHeap<Reverse<(Micros, u64, Ev)>>,
    seq: u64,
    now: Micros,
    trace: Option<Vec<TraceEvent>>,
}

impl Sim {
    fn schedule(&mut self, at: Micros, ev: Ev) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::Causality { now: self.now, at });
        }
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, ev)));
        Ok(())
    }

    fn log(&mut self, seq: u64, kind: TraceKind, tx: usize, node: &str) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEvent {
                t_us: self.now,
                seq,
                kind,
                tx,
                node: node.to_owned(),
            });
        }
    }
}

fn ms_to_us(ms: f64) -> Micros {
    (ms * 1000.0).round() as Micros
}

/// Runs `scenario` to quiescence on a fresh ledger whose keys derive from `seed`.
pub fn run_sim(cfg: &SimConfig, scenario: &Scenario, seed: u64) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let anchor = setup(128, &mut rng)?;
    let edges: Vec<&NodeSpec> = cfg.topology.tier(Tier::Edge).collect();
    let fogs: Vec<&NodeSpec> = cfg.topology.tier(Tier::Fog).collect();
    let orderer = cfg
        .topology
        .nodes
        .iter()
        .find(|n| n.node_id == cfg.topology.orderer)
        .expect("validated");

    let mut ledger_cfg = LedgerConfig::new(anchor.mpk());
    ledger_cfg.block_max_txs = cfg.block_max_txs;
    ledger_cfg.block_timeout_ms = cfg.block_timeout_ms;
    ledger_cfg.commit_delay_ms = cfg.commit_delay_ms;
    ledger_cfg.endorsers = fogs.len();
    ledger_cfg.endorsement_quorum = fogs.len();
    ledger_cfg.peer_seed = seed;
    let mut ledger = Ledger::new(ledger_cfg).with_anchor(anchor.clone());
    let keys: Vec<DeviceKey> = edges
        .iter()
        .map(|e| {
            let device = PufDevice::new(e.node_id.clone(), &mut rng);
            enroll(&device, &e.node_id, &anchor, &mut ledger)
        })
        .collect::<Result<_, _>>()?;
    let attachment = match cfg.credential.mode {
        CredentialMode::Nft => Vec::new(),
        CredentialMode::Certificate => vec![0xC5; cfg.credential.tx_overhead_bytes as usize],
    };

    let mut edge_srv: Vec<Server> = edges.iter().map(|n| Server::new(n, cfg)).collect();
    let mut fog_srv: Vec<Server> = fogs.iter().map(|n| Server::new(n, cfg)).collect();
    let n = scenario.arrivals_us.len();
    let mut txs: Vec<Option<Transaction>> = vec![None; n];
    let mut endorsed = vec![0usize; n];
    let mut dropped = vec![false; n];
    let mut latencies: Vec<Option<f64>> = vec![None; n];
    let mut by_id: HashMap<Digest, usize> = HashMap::new();
    let mut timeout_at: Option<u64> = None;

    let mut sim = Sim {
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        trace: scenario.record_trace.then(Vec::new),
    };
    for (i, &t) in scenario.arrivals_us.iter().enumerate() {
        sim.schedule(t, Ev::Submit(i))?;
    }

    let schedule_commits = |sim: &mut Sim, receipts: Vec<Receipt>, by_id: &HashMap<Digest, usize>| {
        for r in receipts {
            sim.schedule(r.committed_at * 1000, Ev::Commit(by_id[&r.tx_id]))?;
        }
        Ok::<_, SimError>(())
    };

    while let Some(Reverse((t, seq, ev))) = sim.queue.pop() {
        sim.now = t;
        match ev {
            Ev::Submit(i) => {
                let e = i % edges.len();
                sim.log(seq, TraceKind::Submit, i, &edges[e].node_id);
                let Some(done) = edge_srv[e].admit(t) else {
                    dropped[i] = true;
                    sim.log(seq, TraceKind::Dropped, i, &edges[e].node_id);
                    continue;
                };
                let signed_ms = (done / 1000.0) as u64;
                let payload = Payload::RecordEvent {
                    stream: "bench".into(),
                    kind: "reading".into(),
                    body: json!({ "seq": i }),
                    sim_time: signed_ms,
                };
                let envelope = keys[e].sign(&payload.canonical_bytes(), signed_ms);
                let tx = Transaction::new(payload, envelope, ledger.config().home_cluster, attachment.clone());
                by_id.insert(tx.tx_id, i);
                txs[i] = Some(tx);
                sim.log(seq, TraceKind::Signed, i, &edges[e].node_id);
                let arrive = done.round() as Micros + ms_to_us(edges[e].link_delay_ms);
                for fog in 0..fogs.len() {
                    sim.schedule(arrive, Ev::AtFog { tx: i, fog })?;
                }
            }
            Ev::AtFog { tx, fog } => match fog_srv[fog].admit(t) {
                Some(done) => sim.schedule(done.round() as Micros, Ev::EndorseDone(tx))?,
                None => {
                    if !dropped[tx] {
                        dropped[tx] = true;
                        sim.log(seq, TraceKind::Dropped, tx, &fogs[fog].node_id);
                    }
                }
            },
            Ev::EndorseDone(tx) => {
                endorsed[tx] += 1;
                if endorsed[tx] == fogs.len() && !dropped[tx] {
                    sim.log(seq, TraceKind::Endorsed, tx, &orderer.node_id);
                    sim.schedule(t + ms_to_us(orderer.link_delay_ms), Ev::AtOrderer(tx))?;
                }
            }
            Ev::AtOrderer(i) => {
                let receipts = ledger.advance_to(t / 1000)?;
                schedule_commits(&mut sim, receipts, &by_id)?;
                let mut tx = txs[i].take().expect("signed before endorsement");
                ledger.endorse_quorum(&mut tx, None)?;
                let receipts = ledger.enqueue(tx)?;
                schedule_commits(&mut sim, receipts, &by_id)?;
                sim.log(seq, TraceKind::Ordered, i, &orderer.node_id);
                if let Some(d) = ledger.batch_deadline() {
                    if timeout_at != Some(d) {
                        timeout_at = Some(d);
                        sim.schedule(d * 1000, Ev::BatchTimeout)?;
                    }
                }
            }
            Ev::BatchTimeout => {
                let receipts = ledger.advance_to(t / 1000)?;
                schedule_commits(&mut sim, receipts, &by_id)?;
                if let Some(d) = ledger.batch_deadline() {
                    if timeout_at != Some(d) {
                        timeout_at = Some(d);
                        sim.schedule(d * 1000, Ev::BatchTimeout)?;
                    }
                }
            }
            Ev::Commit(i) => {
                latencies[i] = Some((t - scenario.arrivals_us[i]) as f64 / 1000.0);
                sim.log(seq, TraceKind::Committed, i, &orderer.node_id);
            }
        }
    }

    let committed = latencies.iter().filter(|l| l.is_some()).count() as u64;
    let failed = dropped.iter().filter(|&&d| d).count() as u64;
    let latencies_ms: Vec<f64> = latencies
        .into_iter()
        .map(|l| l.unwrap_or(cfg.client_timeout_ms))
        .collect();
    let metrics = Metrics {
        mode: cfg.credential.mode,
        send_rate_tps: scenario.send_rate_tps,
        achieved_throughput_tps: if scenario.duration_s > 0.0 {
            committed as f64 / scenario.duration_s
        } else {
            0.0
        },
        latency_mean_ms: mean(&latencies_ms),
        latency_p95_ms: percentile(&latencies_ms, 0.95),
        committed_tx_count: committed,
        failed_tx_count: failed,
        storage_bytes: memory_footprint(edges.len() as u64, &cfg.credential),
    };
    Ok(SimOutcome {
        metrics,
        trace: sim.trace.unwrap_or_default(),
        ledger,
        latencies_ms,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Nearest-rank percentile.
fn percentile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank - 1]
}
