//! Simulated physically unclonable function.
//!
//! A device's silicon fingerprint is modelled as a secret seed that never
//! leaves the device; the challenge-response map is HMAC-SHA256 keyed by
//! that seed. Responses are deterministic per device and unrelated across
//! devices.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::digest::{hex_array, keyed_hash};

pub const CHALLENGE_LEN: usize = 16;
pub const RESPONSE_LEN: usize = 32;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Challenge(#[serde(with = "hex_array")] pub [u8; CHALLENGE_LEN]);

/// PUF output. Also serves as the device identifier `R` on the ledger.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Response(#[serde(with = "hex_array")] pub [u8; RESPONSE_LEN]);

impl Response {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Challenge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Challenge({})", hex::encode(self.0))
    }
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Response({}..)", &self.to_hex()[..12])
    }
}

/// Anything that can answer a PUF challenge on behalf of a live device.
pub trait PufOracle {
    fn respond(&self, challenge: &Challenge) -> Response;
}

/// A simulated device carrying a PUF circuit.
#[derive(Clone)]
pub struct PufDevice {
    device_seed: [u8; 32],
    pub hardware_label: String,
}

impl PufDevice {
    pub fn new<R: RngCore + ?Sized>(hardware_label: impl Into<String>, rng: &mut R) -> Self {
        let mut device_seed = [0u8; 32];
        rng.fill_bytes(&mut device_seed);
        Self::from_seed(hardware_label, device_seed)
    }

    pub fn from_seed(hardware_label: impl Into<String>, device_seed: [u8; 32]) -> Self {
        PufDevice {
            device_seed,
            hardware_label: hardware_label.into(),
        }
    }

    pub fn puf_respond(&self, challenge: &Challenge) -> Response {
        Response(keyed_hash(&self.device_seed, &[b"puf", &challenge.0]))
    }
}

impl PufOracle for PufDevice {
    fn respond(&self, challenge: &Challenge) -> Response {
        self.puf_respond(challenge)
    }
}

// The seed is the device secret; keep it out of logs.
impl fmt::Debug for PufDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PufDevice")
            .field("hardware_label", &self.hardware_label)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn challenge(byte: u8) -> Challenge {
        Challenge([byte; CHALLENGE_LEN])
    }

    #[test]
    fn same_device_same_challenge_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let dev = PufDevice::new("meter-1", &mut rng);
        assert_eq!(dev.puf_respond(&challenge(7)), dev.puf_respond(&challenge(7)));
        assert_ne!(dev.puf_respond(&challenge(7)), dev.puf_respond(&challenge(8)));
    }

    #[test]
    fn distinct_devices_disagree() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = PufDevice::new("a", &mut rng);
        let b = PufDevice::new("b", &mut rng);
        assert_ne!(a.puf_respond(&challenge(0)), b.puf_respond(&challenge(0)));
    }

    #[test]
    fn response_length_is_fixed() {
        let dev = PufDevice::from_seed("x", [3; 32]);
        for i in 0..8u8 {
            assert_eq!(dev.puf_respond(&challenge(i)).0.len(), RESPONSE_LEN);
        }
    }

    #[test]
    fn no_collisions_over_a_thousand_devices() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let c = challenge(42);
        let responses: HashSet<Response> = (0..1000)
            .map(|i| PufDevice::new(format!("dev-{i}"), &mut rng).puf_respond(&c))
            .collect();
        assert_eq!(responses.len(), 1000);
    }
}
