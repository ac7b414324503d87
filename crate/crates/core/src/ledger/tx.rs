use serde::{Deserialize, Serialize};

use crate::digest::{hex_bytes, Digest};
use crate::identity::{
    AnchorKeys, DeviceKey, Flag, PublicKey, Response, Signature, SignedEnvelope,
};
use crate::SimTime;

/// Lookup key for the registry: a token id or a device response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKey {
    Token(Digest),
    Device(Response),
}

/// Typed contract invocation carried by a transaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Payload {
    CreateNft {
        device_id: Response,
        owner_id: String,
        token_name: String,
        public_key: PublicKey,
        issue_time: SimTime,
    },
    Query {
        key: QueryKey,
    },
    SetFlag {
        token_id: Digest,
        flag: Flag,
        /// Delegate or new owner, required for `delegated` / `transferred`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counterparty: Option<String>,
    },
    RecordEvent {
        stream: String,
        kind: String,
        body: serde_json::Value,
        sim_time: SimTime,
    },
}

impl Payload {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serialization is infallible")
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Payload::CreateNft { .. } => "create_nft",
            Payload::Query { .. } => "query",
            Payload::SetFlag { .. } => "set_flag",
            Payload::RecordEvent { .. } => "record_event",
        }
    }
}

/// A peer's signature over a transaction id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub peer_id: String,
    pub signature: Signature,
}

impl Endorsement {
    pub fn signing_bytes(tx_id: &Digest) -> Vec<u8> {
        [b"plexi-endorse".as_slice(), &tx_id.0].concat()
    }

    pub fn notary_signing_bytes(tx_id: &Digest) -> Vec<u8> {
        [b"plexi-notarize".as_slice(), &tx_id.0].concat()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: Digest,
    pub payload: Payload,
    pub envelope: SignedEnvelope,
    pub origin_cluster: u32,
    /// Extra credential bytes shipped with the transaction (a certificate in
    /// certificate-mode benchmarks).
    #[serde(default, with = "hex_bytes", skip_serializing_if = "Vec::is_empty")]
    pub attachment: Vec<u8>,
    pub sim_time_submitted: SimTime,
    pub endorsements: Vec<Endorsement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notarization: Option<Endorsement>,
}

impl Transaction {
    /// Wraps an already-signed envelope. The envelope message must be the
    /// payload's canonical bytes; endorsement checks that.
    pub fn new(
        payload: Payload,
        envelope: SignedEnvelope,
        origin_cluster: u32,
        attachment: Vec<u8>,
    ) -> Self {
        let sim_time_submitted = envelope.sim_time;
        let tx_id = Self::compute_id(&payload, &envelope, &attachment);
        Transaction {
            tx_id,
            payload,
            envelope,
            origin_cluster,
            attachment,
            sim_time_submitted,
            endorsements: Vec::new(),
            notarization: None,
        }
    }

    pub fn signed_by_device(payload: Payload, key: &DeviceKey, now: SimTime, cluster: u32) -> Self {
        let envelope = key.sign(&payload.canonical_bytes(), now);
        Self::new(payload, envelope, cluster, Vec::new())
    }

    pub fn signed_by_anchor(payload: Payload, anchor: &AnchorKeys, now: SimTime, cluster: u32) -> Self {
        let envelope = SignedEnvelope::anchor_signed(anchor, payload.canonical_bytes(), now);
        Self::new(payload, envelope, cluster, Vec::new())
    }

    /// `H(payload ‖ envelope ‖ attachment)`.
    pub fn compute_id(payload: &Payload, envelope: &SignedEnvelope, attachment: &[u8]) -> Digest {
        let env_bytes = serde_json::to_vec(envelope).expect("envelope serialization is infallible");
        Digest::of_parts(&[&payload.canonical_bytes(), &env_bytes, attachment])
    }

    pub fn id_is_consistent(&self) -> bool {
        self.tx_id == Self::compute_id(&self.payload, &self.envelope, &self.attachment)
    }

    pub fn payload_matches_envelope(&self) -> bool {
        self.envelope.message == self.payload.canonical_bytes()
    }

    /// Serialized size, used by the benchmark cost model.
    pub fn wire_size(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }
}
