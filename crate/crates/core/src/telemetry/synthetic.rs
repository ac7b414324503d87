//! Seeded synthetic building telemetry in the ingestion schema.

use chrono::{NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{TelemetrySample, SAMPLE_MINUTES};

/// Floor for net power; keeps every sample importing so proportional FDI
/// always raises the reading.
const MIN_NET_KW: f64 = 0.2;

/// `days` of 30-minute samples starting 2020-01-01 with a diurnal HVAC
/// cycle, a seasonal ambient swing and small PV output.
pub fn synthetic_series(days: usize, seed: u64) -> Vec<TelemetrySample> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");
    let per_day = (24 * 60 / SAMPLE_MINUTES) as usize;
    let tau = std::f64::consts::TAU;
    (0..days * per_day)
        .map(|i| {
            let day = (i / per_day) as f64;
            let hour = (i % per_day) as f64 * SAMPLE_MINUTES as f64 / 60.0;
            let seasonal = 4.0 * (tau * day / 365.0).cos();
            let diurnal = -5.0 * (tau * (hour - 3.0) / 24.0).cos();
            let tamb_c = 21.0 + seasonal + diurnal + rng.gen_range(-1.0..1.0);
            let occupied = (7.0..22.0).contains(&hour);
            let hvac_kw = if occupied {
                (0.4 * (tamb_c - 20.0).abs() + rng.gen_range(0.0..0.3)).max(0.0)
            } else {
                rng.gen_range(0.0..0.2)
            };
            let base = 1.2 + if occupied { 0.8 } else { 0.0 } + rng.gen_range(0.0..0.4);
            let pv = (2.0 * (tau * (hour - 6.0) / 24.0).sin()).max(0.0) * rng.gen_range(0.3..1.0);
            TelemetrySample {
                time: t0 + TimeDelta::minutes(SAMPLE_MINUTES * i as i64),
                net_kw: (base + hvac_kw - pv).max(MIN_NET_KW),
                tamb_c,
                hvac_kw,
                hvac_demand_res_kw: 0.6 * hvac_kw,
            }
        })
        .collect()
}
