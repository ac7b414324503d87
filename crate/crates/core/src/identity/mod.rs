//! Certificate-less device identity.
//!
//! An anchor peer holds master keys `(msk, mpk)`. Enrollment challenges the
//! device PUF, derives a per-device key pair from `msk`, and mints an
//! [`NftToken`] on the ledger binding the PUF response `R`, the device
//! verification key and the owner. Verification looks the token up, re-runs
//! the PUF challenge against the live device and only then checks the
//! signature.

mod keys;
mod puf;
mod token;

use std::error::Error as StdError;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use keys::{
    anchor_id_for, derive_challenge, generate_device_keys, setup, AnchorKeys, KeyPair, PartialKey,
    PublicKey, Signature, SUPPORTED_LAMBDAS,
};
pub use puf::{Challenge, PufDevice, PufOracle, Response, CHALLENGE_LEN, RESPONSE_LEN};
pub use token::{token_id_for, ConstraintFlags, Flag, NftToken};

use crate::digest::{hex_bytes, Digest};
use crate::SimTime;

/// Challenge index used for the enrollment response and for every later
/// identity check.
pub const ENROLLMENT_CHALLENGE_INDEX: u32 = 0;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("unsupported security parameter {0} (expected one of 128, 192, 256)")]
    UnsupportedLambda(u16),
    #[error("enrollment rejected: device {} already holds a token", .0.to_hex())]
    AlreadyEnrolled(Response),
    #[error("registry failure during enrollment: {0}")]
    Registry(#[source] Box<dyn StdError + Send + Sync>),
}

/// Read access to committed identity tokens.
pub trait TokenRegistry {
    fn token(&self, token_id: &Digest) -> Option<NftToken>;
    fn token_by_device(&self, device_id: &Response) -> Option<NftToken>;
}

/// A registry that can mint tokens on behalf of the anchor peer.
pub trait NftRegistry: TokenRegistry {
    type Error: StdError + Send + Sync + 'static;

    fn create_nft(
        &mut self,
        anchor: &AnchorKeys,
        device_id: Response,
        owner_id: &str,
        token_name: &str,
        public_key: PublicKey,
    ) -> Result<NftToken, Self::Error>;
}

/// What a device keeps after enrollment: its signing key and token id.
#[derive(Clone, Debug)]
pub struct DeviceKey {
    pub token_id: Digest,
    keys: KeyPair,
}

impl DeviceKey {
    pub fn new(token_id: Digest, keys: KeyPair) -> Self {
        DeviceKey { token_id, keys }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public_key()
    }

    pub fn sign(&self, message: &[u8], sim_time: SimTime) -> SignedEnvelope {
        sign(message, self, sim_time)
    }
}

/// Message plus signature, tagged with the signer's token id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedEnvelope {
    #[serde(with = "hex_bytes")]
    pub message: Vec<u8>,
    pub signature: Signature,
    pub token_id: Digest,
    pub sim_time: SimTime,
}

impl SignedEnvelope {
    /// Bytes covered by the signature: token id, timestamp and message.
    pub fn signing_bytes(token_id: &Digest, sim_time: SimTime, message: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(message.len() + 56);
        out.extend_from_slice(b"plexi-envelope");
        out.extend_from_slice(&token_id.0);
        out.extend_from_slice(&sim_time.to_be_bytes());
        out.extend_from_slice(message);
        out
    }

    pub fn signed_by(&self, key: &PublicKey) -> bool {
        key.verify(
            &Self::signing_bytes(&self.token_id, self.sim_time, &self.message),
            &self.signature,
        )
    }

    /// Envelope signed by the anchor peer itself (used for token minting).
    pub fn anchor_signed(anchor: &AnchorKeys, message: Vec<u8>, sim_time: SimTime) -> Self {
        let token_id = anchor.anchor_id();
        let signature = anchor.sign(&Self::signing_bytes(&token_id, sim_time, &message));
        SignedEnvelope {
            message,
            signature,
            token_id,
            sim_time,
        }
    }
}

/// Why verification halted before reaching the signature check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Halt {
    UnknownToken,
    Revoked,
    PufMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    /// ⊥: the identity check itself failed.
    Halted(Halt),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Whether a verification consulted the live device PUF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    Full,
    /// Signature-only: no device PUF was reachable.
    Partial,
}

/// Enrolls `device` for `owner_id`, minting its token on `registry`.
pub fn enroll<G: NftRegistry>(
    device: &PufDevice,
    owner_id: &str,
    anchor: &AnchorKeys,
    registry: &mut G,
) -> Result<DeviceKey, IdentityError> {
    let challenge = derive_challenge(anchor, ENROLLMENT_CHALLENGE_INDEX);
    let device_id = device.puf_respond(&challenge);
    if registry.token_by_device(&device_id).is_some() {
        return Err(IdentityError::AlreadyEnrolled(device_id));
    }
    let (keys, _partial) = generate_device_keys(anchor, &device_id);
    let token = registry
        .create_nft(anchor, device_id, owner_id, &device.hardware_label, keys.public_key())
        .map_err(|e| IdentityError::Registry(Box::new(e)))?;
    debug_assert_eq!(token.public_key, keys.public_key());
    Ok(DeviceKey::new(token.token_id, keys))
}

pub fn sign(message: &[u8], key: &DeviceKey, sim_time: SimTime) -> SignedEnvelope {
    let signature = key
        .keys
        .sign(&SignedEnvelope::signing_bytes(&key.token_id, sim_time, message));
    SignedEnvelope {
        message: message.to_vec(),
        signature,
        token_id: key.token_id,
        sim_time,
    }
}

/// Full verification: token lookup, PUF re-challenge against the live
/// device, then the signature.
pub fn verify<T: TokenRegistry + ?Sized>(
    env: &SignedEnvelope,
    registry: &T,
    anchor: &AnchorKeys,
    device: &dyn PufOracle,
) -> Verdict {
    let token = match lookup(env, registry) {
        Ok(token) => token,
        Err(halt) => return Verdict::Halted(halt),
    };
    let challenge = derive_challenge(anchor, ENROLLMENT_CHALLENGE_INDEX);
    if device.respond(&challenge) != token.device_id {
        return Verdict::Halted(Halt::PufMismatch);
    }
    signature_verdict(env, &token)
}

/// Signature-only verification for when the device is not reachable.
pub fn verify_partial<T: TokenRegistry + ?Sized>(env: &SignedEnvelope, registry: &T) -> Verdict {
    match lookup(env, registry) {
        Ok(token) => signature_verdict(env, &token),
        Err(halt) => Verdict::Halted(halt),
    }
}

fn lookup<T: TokenRegistry + ?Sized>(env: &SignedEnvelope, registry: &T) -> Result<NftToken, Halt> {
    let token = registry.token(&env.token_id).ok_or(Halt::UnknownToken)?;
    if token.is_revoked() {
        return Err(Halt::Revoked);
    }
    Ok(token)
}

fn signature_verdict(env: &SignedEnvelope, token: &NftToken) -> Verdict {
    if env.signed_by(&token.public_key) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::convert::Infallible;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    #[derive(Default)]
    struct MemRegistry {
        tokens: BTreeMap<Digest, NftToken>,
    }

    impl TokenRegistry for MemRegistry {
        fn token(&self, token_id: &Digest) -> Option<NftToken> {
            self.tokens.get(token_id).cloned()
        }
        fn token_by_device(&self, device_id: &Response) -> Option<NftToken> {
            self.tokens.values().find(|t| &t.device_id == device_id).cloned()
        }
    }

    impl NftRegistry for MemRegistry {
        type Error = Infallible;
        fn create_nft(
            &mut self,
            _anchor: &AnchorKeys,
            device_id: Response,
            owner_id: &str,
            token_name: &str,
            public_key: PublicKey,
        ) -> Result<NftToken, Infallible> {
            let t = NftToken::new(token_name, device_id, public_key, owner_id, 0);
            self.tokens.insert(t.token_id, t.clone());
            Ok(t)
        }
    }

    fn fixture() -> (AnchorKeys, MemRegistry, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        (setup(128, &mut rng).unwrap(), MemRegistry::default(), rng)
    }

    #[test]
    fn enroll_sign_verify_accepts() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let key = enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        let token = reg.token(&key.token_id).unwrap();
        assert_eq!(token.token_id, token_id_for(&token.device_id, &key.public_key(), "alice"));
        let env = key.sign(b"reading=4.2", 10);
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Accept);
        let env2 = key.sign(b"reading=4.2", 10);
        assert_eq!(verify(&env2, &reg, &anchor, &dev), Verdict::Accept);
    }

    #[test]
    fn second_enrollment_is_rejected() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        assert!(matches!(
            enroll(&dev, "alice", &anchor, &mut reg),
            Err(IdentityError::AlreadyEnrolled(_))
        ));
    }

    #[test]
    fn unknown_token_halts() {
        let (anchor, reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let stray = DeviceKey::new(Digest([5; 32]), KeyPair::from_seed([1; 32]));
        let env = stray.sign(b"m", 0);
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Halted(Halt::UnknownToken));
    }

    #[test]
    fn replay_from_other_device_halts_at_puf() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let clone = PufDevice::new("clone", &mut rng);
        let key = enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        let env = key.sign(b"m", 0);
        assert_eq!(verify(&env, &reg, &anchor, &clone), Verdict::Halted(Halt::PufMismatch));
    }

    #[test]
    fn tampered_message_rejects() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let key = enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        let mut env = key.sign(b"net=100", 0);
        env.message[0] ^= 1;
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Reject);
        let mut env = key.sign(b"net=100", 0);
        env.sim_time += 1;
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Reject);
    }

    #[test]
    fn revoked_token_halts_both_modes() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let key = enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        reg.tokens.get_mut(&key.token_id).unwrap().constraints.set(Flag::Revoked);
        let env = key.sign(b"m", 0);
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Halted(Halt::Revoked));
        assert_eq!(verify_partial(&env, &reg), Verdict::Halted(Halt::Revoked));
    }

    #[test]
    fn foreign_key_citing_token_rejects() {
        let (anchor, mut reg, mut rng) = fixture();
        let dev = PufDevice::new("meter", &mut rng);
        let key = enroll(&dev, "alice", &anchor, &mut reg).unwrap();
        let forger = DeviceKey::new(key.token_id, KeyPair::from_seed([42; 32]));
        let env = forger.sign(b"m", 0);
        assert_eq!(verify(&env, &reg, &anchor, &dev), Verdict::Reject);
    }
}
