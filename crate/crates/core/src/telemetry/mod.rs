//! Telemetry ingestion, flexibility estimation, attack injection and
//! signature-based tamper detection.
//!
//! Series are 30-minute samples in the CSV schema
//! `time,net,tamb,hvac,hvac_demand_res` with ISO-8601 timestamps.

mod attack;
mod estimate;
mod integrity;
mod synthetic;

use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attack::{fdi_inject, madiot_gain, madiot_inject, AttackKind, AttackProfile, Magnitude, MadiotOutcome};
pub use estimate::{estimate_flexibility, Estimator, LinearEstimator};
pub use integrity::{detect_tamper, sign_stream, SignedSample};
pub use synthetic::synthetic_series;

pub const COLUMNS: [&str; 5] = ["time", "net", "tamb", "hvac", "hvac_demand_res"];
pub const SAMPLE_MINUTES: i64 = 30;
pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("unexpected column {0:?}")]
    UnexpectedColumn(String),
    #[error("line {line}: {detail}")]
    Ingest { line: u64, detail: String },
    #[error("config: {0}")]
    Config(String),
    #[error("index {t} out of range for series of length {len}")]
    Bounds { t: usize, len: usize },
    #[error("fraction {0} outside (0, 100]")]
    Fraction(f64),
    #[error("window {start}..{end} outside series of length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub time: NaiveDateTime,
    pub net_kw: f64,
    pub tamb_c: f64,
    pub hvac_kw: f64,
    pub hvac_demand_res_kw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetField {
    NetKw,
    TambC,
    HvacKw,
}

impl TargetField {
    pub fn get(self, s: &TelemetrySample) -> f64 {
        match self {
            TargetField::NetKw => s.net_kw,
            TargetField::TambC => s.tamb_c,
            TargetField::HvacKw => s.hvac_kw,
        }
    }

    pub fn set(self, s: &mut TelemetrySample, v: f64) {
        match self {
            TargetField::NetKw => s.net_kw = v,
            TargetField::TambC => s.tamb_c = v,
            TargetField::HvacKw => s.hvac_kw = v,
        }
    }
}

fn parse_time(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(raw, TIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// Parses and validates a telemetry CSV.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<TelemetrySample>, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TelemetryError::MissingColumn(name.to_owned()))?;
    }
    if let Some(extra) = headers.iter().find(|h| !COLUMNS.contains(h)) {
        return Err(TelemetryError::UnexpectedColumn(extra.to_owned()));
    }
    let stride = TimeDelta::minutes(SAMPLE_MINUTES);
    let mut out: Vec<TelemetrySample> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |detail: String| TelemetryError::Ingest { line, detail };
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let time = parse_time(field(0)).ok_or_else(|| err(format!("unparsable time {:?}", field(0))))?;
        let num = |i: usize| -> Result<f64, TelemetryError> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("unparsable {} value {:?}", COLUMNS[i], field(i))))
        };
        let sample = TelemetrySample {
            time,
            net_kw: num(1)?,
            tamb_c: num(2)?,
            hvac_kw: num(3)?,
            hvac_demand_res_kw: num(4)?,
        };
        if sample.hvac_kw < 0.0 {
            return Err(err(format!("negative hvac {}", sample.hvac_kw)));
        }
        if let Some(prev) = out.last() {
            if sample.time <= prev.time {
                return Err(err(format!("time {} does not follow {}", sample.time, prev.time)));
            }
            if sample.time - prev.time != stride {
                return Err(err(format!("time {} is not {SAMPLE_MINUTES} minutes after {}", sample.time, prev.time)));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<TelemetrySample>, TelemetryError> {
    read_dataset(std::fs::File::open(path)?)
}

pub fn write_dataset<W: Write>(writer: W, series: &[TelemetrySample]) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for s in series {
        w.write_record([
            s.time.format(TIME_FORMAT).to_string(),
            s.net_kw.to_string(),
            s.tamb_c.to_string(),
            s.hvac_kw.to_string(),
            s.hvac_demand_res_kw.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of an attack report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub time: String,
    pub original: f64,
    pub attacked: f64,
    pub df_original: f64,
    pub df_attacked: f64,
    pub flagged: bool,
}

/// Pairs original and attacked series sample by sample.
pub fn build_report(
    original: &[TelemetrySample],
    attacked: &[TelemetrySample],
    target: TargetField,
    estimator: &dyn Estimator,
    flagged: &[usize],
) -> Vec<ReportRow> {
    original
        .iter()
        .zip(attacked)
        .enumerate()
        .map(|(i, (o, a))| ReportRow {
            time: o.time.format(TIME_FORMAT).to_string(),
            original: target.get(o),
            attacked: target.get(a),
            df_original: estimator.estimate(o),
            df_attacked: estimator.estimate(a),
            flagged: flagged.contains(&i),
        })
        .collect()
}

pub fn write_report<W: Write>(writer: W, rows: &[ReportRow]) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
