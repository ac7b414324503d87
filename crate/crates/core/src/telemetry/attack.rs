//! FDI and MadIoT attack profiles.
//!
//! FDI is additive, `c_t = g_t + d_t`; the proportional form sets
//! `d_t = fraction/100 × g_t`. MadIoT scales a sensor reading and reports
//! the cumulative gain `G_t = Σ_{i≤t} d_i` of the per-step deltas.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{TargetField, TelemetryError, TelemetrySample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fdi,
    Madiot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    /// Percent of the true reading.
    Fraction(f64),
    /// Explicit `d_t`, one entry per window sample.
    Additive(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackProfile {
    pub kind: AttackKind,
    pub target_field: TargetField,
    pub magnitude: Magnitude,
    pub window: Range<usize>,
}

fn check_fraction(fraction: f64) -> Result<(), TelemetryError> {
    if fraction > 0.0 && fraction <= 100.0 {
        Ok(())
    } else {
        Err(TelemetryError::Fraction(fraction))
    }
}

impl AttackProfile {
    /// Per-sample `d_t` over the window.
    pub fn deltas(&self, series: &[TelemetrySample]) -> Result<Vec<f64>, TelemetryError> {
        let Range { start, end } = self.window.clone();
        if start > end || end > series.len() {
            return Err(TelemetryError::Window {
                start,
                end,
                len: series.len(),
            });
        }
        match &self.magnitude {
            Magnitude::Fraction(f) => {
                check_fraction(*f)?;
                Ok(series[start..end]
                    .iter()
                    .map(|s| f / 100.0 * self.target_field.get(s))
                    .collect())
            }
            Magnitude::Additive(d) if d.len() == end - start => Ok(d.clone()),
            Magnitude::Additive(d) => Err(TelemetryError::Config(format!(
                "{} deltas for a window of {}",
                d.len(),
                end - start
            ))),
        }
    }

    /// Returns an attacked copy; the input is left untouched.
    pub fn apply(&self, series: &[TelemetrySample]) -> Result<Vec<TelemetrySample>, TelemetryError> {
        let deltas = self.deltas(series)?;
        let mut out = series.to_vec();
        for (s, d) in out[self.window.clone()].iter_mut().zip(deltas) {
            let v = self.target_field.get(s) + d;
            self.target_field.set(s, v);
        }
        Ok(out)
    }
}

/// Proportional FDI over the whole series.
pub fn fdi_inject(
    series: &[TelemetrySample],
    fraction: f64,
    target: TargetField,
) -> Result<Vec<TelemetrySample>, TelemetryError> {
    AttackProfile {
        kind: AttackKind::Fdi,
        target_field: target,
        magnitude: Magnitude::Fraction(fraction),
        window: 0..series.len(),
    }
    .apply(series)
}

/// `G_t`: sum of the first `t` deltas.
pub fn madiot_gain(d: &[f64], t: usize) -> Result<f64, TelemetryError> {
    if t > d.len() {
        return Err(TelemetryError::Bounds { t, len: d.len() });
    }
    Ok(d[..t].iter().sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MadiotOutcome {
    pub series: Vec<TelemetrySample>,
    /// `attacked − original` per sample.
    pub deltas: Vec<f64>,
    pub gain: f64,
}

/// Scales `target` by `1 + fraction/100` over the whole series.
pub fn madiot_inject(
    series: &[TelemetrySample],
    fraction: f64,
    target: TargetField,
) -> Result<MadiotOutcome, TelemetryError> {
    let profile = AttackProfile {
        kind: AttackKind::Madiot,
        target_field: target,
        magnitude: Magnitude::Fraction(fraction),
        window: 0..series.len(),
    };
    let attacked = profile.apply(series)?;
    let deltas: Vec<f64> = series
        .iter()
        .zip(&attacked)
        .map(|(o, a)| target.get(a) - target.get(o))
        .collect();
    let gain = madiot_gain(&deltas, deltas.len())?;
    Ok(MadiotOutcome {
        series: attacked,
        deltas,
        gain,
    })
}
