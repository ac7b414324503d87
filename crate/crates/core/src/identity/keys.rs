//! Anchor-peer master keys, per-device key derivation and the signature primitive.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::puf::{Challenge, Response, CHALLENGE_LEN};
use super::IdentityError;
use crate::digest::{hex_array, keyed_hash, Digest};

pub const SUPPORTED_LAMBDAS: [u16; 3] = [128, 192, 256];

/// Ed25519 verification key bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_array")] pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "hex_array")] pub [u8; 64]);

impl PublicKey {
    /// Checks `signature` over `message`. Malformed keys simply fail.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify(message, &sig).is_ok()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(&self.0[..6]))
    }
}

/// A signing key with its verification half.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("pk", &self.public_key())
            .finish_non_exhaustive()
    }
}

/// The msk-derived seed a device key pair is regenerated from. This is the
/// only per-device credential material the registry side needs to keep.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PartialKey(pub [u8; 32]);

/// Master key pair of the anchor peer that runs enrollment.
#[derive(Clone)]
pub struct AnchorKeys {
    msk: Vec<u8>,
    mpk: PublicKey,
    lambda: u16,
}

impl AnchorKeys {
    /// Rebuilds anchor keys from an existing master secret; `mpk` is a pure
    /// function of `msk`.
    pub fn from_msk(msk: Vec<u8>) -> Result<Self, IdentityError> {
        let lambda = (msk.len() * 8) as u16;
        if !SUPPORTED_LAMBDAS.contains(&lambda) {
            return Err(IdentityError::UnsupportedLambda(lambda));
        }
        let mpk = Self::signing_pair(&msk).public_key();
        Ok(AnchorKeys { msk, mpk, lambda })
    }

    fn signing_pair(msk: &[u8]) -> KeyPair {
        KeyPair::from_seed(keyed_hash(msk, &[b"anchor-signing-key"]))
    }

    pub fn mpk(&self) -> PublicKey {
        self.mpk
    }

    pub fn lambda(&self) -> u16 {
        self.lambda
    }

    pub fn msk(&self) -> &[u8] {
        &self.msk
    }

    /// Identifier the anchor uses in place of a token id when it signs ledger
    /// transactions.
    pub fn anchor_id(&self) -> Digest {
        anchor_id_for(&self.mpk)
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Self::signing_pair(&self.msk).sign(message)
    }
}

impl fmt::Debug for AnchorKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnchorKeys")
            .field("mpk", &self.mpk)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

pub fn anchor_id_for(mpk: &PublicKey) -> Digest {
    Digest::of_parts(&[b"anchor", &mpk.0])
}

/// Generates a fresh anchor key pair at security level `lambda` bits.
pub fn setup<R: RngCore + ?Sized>(lambda: u16, rng: &mut R) -> Result<AnchorKeys, IdentityError> {
    if !SUPPORTED_LAMBDAS.contains(&lambda) {
        return Err(IdentityError::UnsupportedLambda(lambda));
    }
    let mut msk = vec![0u8; lambda as usize / 8];
    rng.fill_bytes(&mut msk);
    AnchorKeys::from_msk(msk)
}

/// `C = H(msk, index)` truncated to the challenge length.
pub fn derive_challenge(anchor: &AnchorKeys, index: u32) -> Challenge {
    let full = keyed_hash(&anchor.msk, &[b"challenge", &index.to_be_bytes()]);
    let mut out = [0u8; CHALLENGE_LEN];
    out.copy_from_slice(&full[..CHALLENGE_LEN]);
    Challenge(out)
}

/// Per-device key generation seeded by the master secret and mixed with the
/// device response so every device gets its own pair.
pub fn generate_device_keys(anchor: &AnchorKeys, device_id: &Response) -> (KeyPair, PartialKey) {
    let seed = keyed_hash(&anchor.msk, &[b"device-key", &device_id.0]);
    (KeyPair::from_seed(seed), PartialKey(seed))
}
