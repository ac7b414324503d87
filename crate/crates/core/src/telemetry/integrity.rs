//! Per-sample signatures made at ingestion and re-checked downstream.

use serde::{Deserialize, Serialize};

use super::{TelemetrySample, TIME_FORMAT};
use crate::identity::{verify_partial, DeviceKey, SignedEnvelope, TokenRegistry, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedSample {
    pub sample: TelemetrySample,
    pub envelope: SignedEnvelope,
}

/// Byte encoding a sample's signature covers.
pub fn sample_bytes(s: &TelemetrySample) -> Vec<u8> {
    let mut out = s.time.format(TIME_FORMAT).to_string().into_bytes();
    for v in [s.net_kw, s.tamb_c, s.hvac_kw, s.hvac_demand_res_kw] {
        out.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    out
}

/// Signs each sample; the envelope time is the sample index.
pub fn sign_stream(series: &[TelemetrySample], key: &DeviceKey) -> Vec<SignedSample> {
    series
        .iter()
        .enumerate()
        .map(|(i, s)| SignedSample {
            sample: *s,
            envelope: key.sign(&sample_bytes(s), i as u64),
        })
        .collect()
}

/// Indices whose sample no longer matches its signed envelope, or whose
/// envelope fails verification against `registry`.
pub fn detect_tamper<T: TokenRegistry + ?Sized>(stream: &[SignedSample], registry: &T) -> Vec<usize> {
    stream
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.envelope.message != sample_bytes(&s.sample) || verify_partial(&s.envelope, registry) != Verdict::Accept
        })
        .map(|(i, _)| i)
        .collect()
}
