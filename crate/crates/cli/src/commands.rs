//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use plexisim::aggregator::{
    Action, AggregatorError, Bid, Dfasc, Direction, FlexRequest, FlexResource, ResourceKind, Service,
    SetpointAction, Shape, Window,
};
use plexisim::identity::{enroll, setup, PufDevice, TokenRegistry};
use plexisim::ledger::{Ledger, LedgerConfig};
use plexisim::simnet::{
    memory_footprint, run_benchmark, saturation, write_metrics_csv, write_metrics_json, CredentialMode,
    CredentialModel,
};
use plexisim::telemetry::{
    build_report, detect_tamper, load_dataset, madiot_gain, sign_stream, synthetic_series, write_dataset, write_report,
    AttackKind, AttackProfile, Magnitude, SignedSample, TargetField,
};

use crate::config::{ScenarioBid, ScenarioConfig};
use crate::{AttackArg, Cli, Command};

pub enum Status {
    Done,
    /// The market or the schedule had no solution.
    Infeasible,
}

const DEFAULT_SEED: u64 = 42;
const DEFAULT_SYNTHETIC_DAYS: usize = 7;
const DEFAULT_FRACTION: f64 = 2.0;
/// Devices used for the footprint ratio in the bench summary.
const FOOTPRINT_DEVICES: u64 = 100;

pub fn run(cli: &Cli) -> Result<Status> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::with_seed(DEFAULT_SEED),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    log::info!("seed {} output {}", cfg.seed, out.display());
    match &cli.command {
        Command::Enroll { n_devices } => cmd_enroll(&cfg, *n_devices, &out),
        Command::Trade => {
            if cfg.requests.is_empty() {
                example_market(&mut cfg);
            }
            cmd_trade(&cfg, &out)
        }
        Command::Attack {
            attack,
            fraction,
            synthetic,
        } => cmd_attack(&cfg, *attack, *fraction, *synthetic, &out),
        Command::Bench { rates, mode } => {
            let modes = match mode {
                Some(m) => vec![(*m).into()],
                None => vec![CredentialMode::Nft, CredentialMode::Certificate],
            };
            cmd_bench(&cfg, rates, &modes, &out)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Anchor keys and device hardware both come from the one seeded stream,
/// so a rerun with the same seed rebuilds the same devices.
fn cmd_enroll(cfg: &ScenarioConfig, n: usize, out: &Path) -> Result<Status> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let anchor = setup(128, &mut rng)?;
    let config = LedgerConfig::new(anchor.mpk());
    let ledger_path = out.join("ledger.jsonl");
    let mut ledger = if ledger_path.exists() {
        Ledger::open(config, &ledger_path)?
    } else {
        Ledger::new(config)
    };
    let mut tokens = create(&out.join("tokens.jsonl"))?;
    let mut failures = Vec::new();
    for i in 0..n {
        let label = format!("device-{i}");
        let device = PufDevice::new(label.clone(), &mut rng);
        match enroll(&device, &format!("owner-{i}"), &anchor, &mut ledger) {
            Ok(key) => {
                let token = ledger.token(&key.token_id).context("enrolled token missing")?;
                serde_json::to_writer(&mut tokens, &token)?;
                tokens.write_all(b"\n")?;
            }
            Err(e) => {
                eprintln!("{label}: {e}");
                failures.push(label);
            }
        }
    }
    tokens.flush()?;
    ledger.save(&ledger_path)?;
    println!("enrolled {} of {n} devices; ledger height {}", n - failures.len(), ledger.height());
    if !failures.is_empty() {
        bail!("{} enrollments failed", failures.len());
    }
    Ok(Status::Done)
}

/// Three bids on a 10 kW islanding request; the cheapest cover is {A, B}.
fn example_market(cfg: &mut ScenarioConfig) {
    let res = |id: &str, kind, cap: f64, owner: &str| FlexResource {
        resource_id: id.into(),
        kind,
        controllable: true,
        capacity_kw: cap,
        baseline_setpoint: SetpointAction::new(Action::Idle, 0.0),
        owner: owner.into(),
    };
    cfg.resources = vec![
        res("dg-a", ResourceKind::Dg, 6.0, "alice"),
        res("ess-b", ResourceKind::Ess, 5.0, "bob"),
        res("dg-c", ResourceKind::Dg, 10.0, "carol"),
    ];
    cfg.requests = vec![FlexRequest {
        request_id: "req-1".into(),
        window: Window { start: 2, duration: 2 },
        shape: Shape::Shed,
        quantity_kw: 10.0,
        direction: Direction::IncreaseSupply,
        incentive_per_kw: 5.0,
        issuer: "dso".into(),
        service: Service::ControlIslanding,
    }];
    let bid = |id: &str, who: &str, kw: f64, price: f64, r: &str| ScenarioBid {
        request_id: "req-1".into(),
        bid: Bid {
            bid_id: id.into(),
            prosumer: who.into(),
            offered_kw: kw,
            price_per_kw: price,
            resource_ids: vec![r.into()],
        },
    };
    cfg.bids = vec![
        bid("A", "alice", 6.0, 3.0, "dg-a"),
        bid("B", "bob", 5.0, 2.0, "ess-b"),
        bid("C", "carol", 10.0, 6.0, "dg-c"),
    ];
}

fn cmd_trade(cfg: &ScenarioConfig, out: &Path) -> Result<Status> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let anchor = setup(128, &mut rng)?;
    let mut dfasc = Dfasc::new(anchor.clone(), LedgerConfig::new(anchor.mpk()), Box::new(rng))?;
    let operators: BTreeSet<&str> = cfg.requests.iter().map(|r| r.issuer.as_str()).collect();
    let prosumers: BTreeSet<&str> = cfg
        .resources
        .iter()
        .map(|r| r.owner.as_str())
        .chain(cfg.bids.iter().map(|b| b.bid.prosumer.as_str()))
        .collect();
    for id in operators {
        dfasc.register_operator(id)?;
    }
    for id in prosumers {
        dfasc.register_prosumer(id)?;
    }
    for r in &cfg.resources {
        dfasc.add_resource(r.clone())?;
    }

    let mut schedules = Vec::new();
    let mut infeasible = None;
    for req in &cfg.requests {
        let id = req.request_id.clone();
        dfasc.create_flex_request(req.clone())?;
        for b in cfg.bids.iter().filter(|b| b.request_id == id) {
            dfasc.submit_bid(b.bid.clone(), &id)?;
        }
        let planned = dfasc.clear(&id).and_then(|_| dfasc.plan(&id));
        let assignment = match planned {
            Ok(a) => a,
            Err(AggregatorError::Unsat(reason)) => {
                infeasible = Some(json!({ "request_id": id, "verdict": "unsat", "reason": reason }));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let schedule = dfasc.schedule_dr(&id, assignment)?;
        dfasc.advance_clock(req.window.start_ms().max(dfasc.now()))?;
        dfasc.advance_clock(req.window.end_ms().max(dfasc.now()))?;
        dfasc.activation_and_settlement(&id)?;
        println!(
            "{id}: selected {:?}, cost {}, delivered {} kW, fulfilled",
            schedule.selected_bids, schedule.total_cost, schedule.delivered_kw
        );
        schedules.push(schedule);
    }

    fs::write(out.join("trace.json"), dfasc.workflow().trace_json())?;
    serde_json::to_writer_pretty(create(&out.join("schedules.json"))?, &schedules)?;
    dfasc.ledger().save(&out.join("ledger.jsonl"))?;
    let replayed = dfasc.ledger().replay()?;
    if &replayed != dfasc.ledger().state() {
        bail!("ledger replay diverged from live state");
    }
    match infeasible {
        Some(report) => {
            println!("{}: unsat ({})", report["request_id"], report["reason"]);
            fs::write(out.join("unsat.json"), serde_json::to_string_pretty(&report)?)?;
            Ok(Status::Infeasible)
        }
        None => Ok(Status::Done),
    }
}

/// Flags win; without them the scenario's profiles apply, else 2% FDI.
fn attack_profiles(
    cfg: &ScenarioConfig,
    attack: Option<AttackArg>,
    fraction: Option<f64>,
    len: usize,
) -> Vec<AttackProfile> {
    if attack.is_none() && fraction.is_none() && !cfg.attacks.is_empty() {
        return cfg.attacks.clone();
    }
    let fraction = fraction.unwrap_or(DEFAULT_FRACTION);
    let (kind, target) = match attack.unwrap_or(AttackArg::Fdi) {
        AttackArg::Fdi => (AttackKind::Fdi, TargetField::NetKw),
        AttackArg::Madiot => (AttackKind::Madiot, TargetField::TambC),
    };
    vec![AttackProfile {
        kind,
        target_field: target,
        magnitude: Magnitude::Fraction(fraction),
        window: 0..len,
    }]
}

fn cmd_attack(
    cfg: &ScenarioConfig,
    attack: Option<AttackArg>,
    fraction: Option<f64>,
    synthetic: Option<usize>,
    out: &Path,
) -> Result<Status> {
    let series = match (synthetic.or(cfg.synthetic_days), &cfg.dataset) {
        (None, Some(path)) => load_dataset(path).with_context(|| format!("loading {}", path.display()))?,
        (days, _) => {
            let s = synthetic_series(days.unwrap_or(DEFAULT_SYNTHETIC_DAYS), cfg.seed);
            write_dataset(create(&out.join("dataset.csv"))?, &s)?;
            s
        }
    };
    let profiles = attack_profiles(cfg, attack, fraction, series.len());

    // Samples are signed at the meter, then tampered with in transit.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let anchor = setup(128, &mut rng)?;
    let mut ledger = Ledger::new(LedgerConfig::new(anchor.mpk()));
    let meter = PufDevice::new("meter-0", &mut rng);
    let key = enroll(&meter, "site-0", &anchor, &mut ledger)?;
    let signed = sign_stream(&series, &key);

    let mut attacked = series.clone();
    for p in &profiles {
        attacked = p.apply(&attacked)?;
    }
    let tampered: Vec<SignedSample> = signed
        .into_iter()
        .zip(&attacked)
        .map(|(s, a)| SignedSample { sample: *a, ..s })
        .collect();
    let flagged = detect_tamper(&tampered, &ledger);
    let target = profiles[0].target_field;
    let rows = build_report(&series, &attacked, target, &cfg.estimator, &flagged);
    write_report(create(&out.join("attack_report.csv"))?, &rows)?;

    let deltas: Vec<f64> = rows.iter().map(|r| r.attacked - r.original).collect();
    let summary = json!({
        "samples": rows.len(),
        "target_field": target,
        "profiles": profiles,
        "flagged": flagged.len(),
        "df_increased": rows.iter().filter(|r| r.df_attacked > r.df_original).count(),
        "df_decreased": rows.iter().filter(|r| r.df_attacked < r.df_original).count(),
        "gain": madiot_gain(&deltas, deltas.len())?,
    });
    fs::write(out.join("attack_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} samples, {} flagged, df up at {}, down at {}",
        rows.len(),
        flagged.len(),
        summary["df_increased"],
        summary["df_decreased"]
    );
    Ok(Status::Done)
}

fn cmd_bench(cfg: &ScenarioConfig, rates: &[f64], modes: &[CredentialMode], out: &Path) -> Result<Status> {
    let model_for = |mode| {
        if cfg.sim.credential.mode == mode {
            cfg.sim.credential.clone()
        } else {
            CredentialModel::for_mode(mode)
        }
    };
    let mut all = Vec::new();
    let mut saturations = serde_json::Map::new();
    for &mode in modes {
        let mut sim = cfg.sim.clone();
        sim.credential = model_for(mode);
        let metrics = run_benchmark(&sim, rates, cfg.bench_duration_s, cfg.seed)?;
        write_metrics_csv(create(&out.join(format!("metrics_{mode}.csv")))?, &metrics)?;
        let s = saturation(&metrics);
        println!("{mode}: saturation {:.1} tps", s.throughput_tps);
        saturations.insert(mode.to_string(), serde_json::to_value(s)?);
        all.extend(metrics);
    }
    write_metrics_json(create(&out.join("metrics.json"))?, &all)?;
    let nft = memory_footprint(FOOTPRINT_DEVICES, &model_for(CredentialMode::Nft));
    let cert = memory_footprint(FOOTPRINT_DEVICES, &model_for(CredentialMode::Certificate));
    let ratio = nft as f64 / cert as f64;
    let summary = json!({
        "seed": cfg.seed,
        "rates": rates,
        "saturation": saturations,
        "footprint_devices": FOOTPRINT_DEVICES,
        "footprint_ratio": ratio,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("footprint ratio nft/certificate {ratio:.4}");
    Ok(Status::Done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use plexisim::aggregator::clear_market;

    #[test]
    fn example_market_clears_to_a_and_b() {
        let mut cfg = ScenarioConfig::with_seed(1);
        example_market(&mut cfg);
        let bids: Vec<Bid> = cfg.bids.iter().map(|b| b.bid.clone()).collect();
        let c = clear_market(&bids, cfg.requests[0].quantity_kw).unwrap();
        assert_eq!(c.selected, ["A", "B"]);
        assert_eq!(c.total_cost, 28.0);
    }
}
