//! Send-rate sweeps and saturation detection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{run_sim, Scenario};
use super::{Metrics, SimConfig, SimError};

/// Minimum simulated send phase for a benchmark point.
pub const MIN_DURATION_S: f64 = 10.0;

/// Runs one simulation per send rate in parallel. Each rate gets its own
/// seed derived from `seed` and its position in `rates`.
pub fn run_benchmark(cfg: &SimConfig, rates: &[f64], duration_s: f64, seed: u64) -> Result<Vec<Metrics>, SimError> {
    if rates.is_empty() {
        return Err(SimError::Config("no send rates given".into()));
    }
    if duration_s < MIN_DURATION_S {
        return Err(SimError::Config(format!("duration must be at least {MIN_DURATION_S} s")));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(SimError::Config(format!("send rate {r} must be positive")));
    }
    rates
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| {
            let run_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            let out = run_sim(cfg, &Scenario::constant_rate(rate, duration_s), run_seed)?;
            log::info!(
                "{} @ {rate} tps: {:.1} tps, mean {:.0} ms, {} failed",
                cfg.credential.mode,
                out.metrics.achieved_throughput_tps,
                out.metrics.latency_mean_ms,
                out.metrics.failed_tx_count
            );
            Ok(out.metrics)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// Highest achieved throughput over the sweep.
    pub throughput_tps: f64,
    /// Highest send rate that completed without failures.
    pub last_clean_rate_tps: Option<f64>,
    /// Lowest send rate with failures.
    pub first_failing_rate_tps: Option<f64>,
}

pub fn saturation(metrics: &[Metrics]) -> Saturation {
    let throughput_tps = metrics
        .iter()
        .map(|m| m.achieved_throughput_tps)
        .fold(0.0, f64::max);
    let clean = metrics.iter().filter(|m| m.failed_tx_count == 0).map(|m| m.send_rate_tps);
    let failing = metrics.iter().filter(|m| m.failed_tx_count > 0).map(|m| m.send_rate_tps);
    Saturation {
        throughput_tps,
        last_clean_rate_tps: clean.reduce(f64::max),
        first_failing_rate_tps: failing.reduce(f64::min),
    }
}

pub fn write_metrics_csv<W: Write>(writer: W, metrics: &[Metrics]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::CredentialMode;

    #[test]
    fn rejects_bad_input() {
        let cfg = SimConfig::default();
        assert!(run_benchmark(&cfg, &[], 10.0, 1).is_err());
        assert!(run_benchmark(&cfg, &[20.0], 5.0, 1).is_err());
        assert!(run_benchmark(&cfg, &[0.0], 10.0, 1).is_err());
    }

    #[test]
    fn underload_is_exact_and_deterministic() {
        let cfg = SimConfig::default().with_mode(CredentialMode::Certificate);
        let a = run_benchmark(&cfg, &[20.0, 100.0], 10.0, 3).unwrap();
        for m in &a {
            assert!((m.achieved_throughput_tps - m.send_rate_tps).abs() <= 1.0);
            assert_eq!(m.failed_tx_count, 0);
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_metrics_csv(&mut x, &a).unwrap();
        write_metrics_csv(&mut y, &run_benchmark(&cfg, &[20.0, 100.0], 10.0, 3).unwrap()).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("mode,send_rate_tps,achieved_throughput_tps,"));
    }

    #[test]
    fn cheaper_mode_saturates_higher() {
        let rates = [100.0, 140.0, 180.0];
        let nft = run_benchmark(&SimConfig::default(), &rates, 10.0, 1).unwrap();
        let cert = run_benchmark(&SimConfig::default().with_mode(CredentialMode::Certificate), &rates, 10.0, 1).unwrap();
        assert!(saturation(&nft).throughput_tps >= saturation(&cert).throughput_tps);
        let s = saturation(&cert);
        assert_eq!(s.last_clean_rate_tps, Some(100.0));
        assert_eq!(s.first_failing_rate_tps, Some(140.0));
    }
}
