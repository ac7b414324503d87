//! World state for the token registry and the workflow event recorder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tx::{Payload, QueryKey, Transaction};
use super::LedgerError;
use crate::digest::Digest;
use crate::identity::{self, anchor_id_for, Flag, NftToken, PublicKey, Response, TokenRegistry, Verdict};
use crate::SimTime;

/// One committed `record_event` invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub stream: String,
    pub kind: String,
    pub body: serde_json::Value,
    pub sim_time: SimTime,
    pub tx_id: Digest,
    pub signer: Digest,
}

/// Who signed a transaction envelope.
#[derive(Clone, Debug, PartialEq)]
pub enum Signer {
    Anchor,
    Token(NftToken),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegistryState {
    pub tokens: BTreeMap<Digest, NftToken>,
    pub device_index: BTreeMap<Response, Digest>,
    /// Actor currently authorized to change flags, when different from the
    /// token owner (set by delegation or transfer).
    pub controllers: BTreeMap<Digest, String>,
    pub event_log: Vec<EventRecord>,
}

impl TokenRegistry for RegistryState {
    fn token(&self, token_id: &Digest) -> Option<NftToken> {
        self.tokens.get(token_id).cloned()
    }

    fn token_by_device(&self, device_id: &Response) -> Option<NftToken> {
        self.device_index
            .get(device_id)
            .and_then(|id| self.tokens.get(id))
            .cloned()
    }
}

impl RegistryState {
    pub fn query(&self, key: &QueryKey) -> Option<NftToken> {
        match key {
            QueryKey::Token(id) => self.token(id),
            QueryKey::Device(r) => self.token_by_device(r),
        }
    }

    /// The actor allowed to set flags on `token`.
    pub fn controller_of(&self, token: &NftToken) -> String {
        self.controllers
            .get(&token.token_id)
            .cloned()
            .unwrap_or_else(|| token.owner_id.clone())
    }

    pub fn events_for(&self, stream: &str) -> impl Iterator<Item = &EventRecord> {
        let stream = stream.to_owned();
        self.event_log.iter().filter(move |e| e.stream == stream)
    }

    /// Signature-only envelope check against this state.
    pub fn authenticate(&self, tx: &Transaction, anchor_mpk: &PublicKey) -> Result<Signer, LedgerError> {
        if !tx.payload_matches_envelope() {
            return Err(LedgerError::Rejected {
                tx_id: tx.tx_id,
                reason: "envelope does not cover the payload".into(),
            });
        }
        if tx.envelope.token_id == anchor_id_for(anchor_mpk) {
            return if tx.envelope.signed_by(anchor_mpk) {
                Ok(Signer::Anchor)
            } else {
                Err(LedgerError::Rejected {
                    tx_id: tx.tx_id,
                    reason: "bad anchor signature".into(),
                })
            };
        }
        match identity::verify_partial(&tx.envelope, self) {
            Verdict::Accept => Ok(Signer::Token(self.tokens[&tx.envelope.token_id].clone())),
            other => Err(LedgerError::Rejected {
                tx_id: tx.tx_id,
                reason: format!("envelope verification: {other:?}"),
            }),
        }
    }

    /// Contract preconditions and authorization, without mutating anything.
    pub fn check(&self, tx: &Transaction, signer: &Signer) -> Result<(), LedgerError> {
        match &tx.payload {
            Payload::CreateNft { device_id, .. } => {
                if *signer != Signer::Anchor {
                    return Err(LedgerError::Unauthorized {
                        actor: signer_name(signer),
                        action: "create_nft".into(),
                    });
                }
                if self.device_index.contains_key(device_id) {
                    return Err(LedgerError::AlreadyBound(*device_id));
                }
                Ok(())
            }
            Payload::SetFlag {
                token_id,
                flag,
                counterparty,
            } => {
                let target = self
                    .tokens
                    .get(token_id)
                    .ok_or(LedgerError::UnknownToken(*token_id))?;
                let actor = match signer {
                    Signer::Token(t) => t.owner_id.clone(),
                    Signer::Anchor => {
                        return Err(LedgerError::Unauthorized {
                            actor: signer_name(signer),
                            action: "set_flag".into(),
                        })
                    }
                };
                if actor != self.controller_of(target) {
                    return Err(LedgerError::Unauthorized {
                        actor,
                        action: format!("set_flag {flag} on {token_id}"),
                    });
                }
                if matches!(flag, Flag::Delegated | Flag::Transferred) && counterparty.is_none() {
                    return Err(LedgerError::Malformed(format!("{flag} requires a counterparty")));
                }
                Ok(())
            }
            Payload::Query { .. } | Payload::RecordEvent { .. } => Ok(()),
        }
    }

    /// Applies an authenticated, checked transaction.
    pub fn apply(&mut self, tx: &Transaction, signer: &Signer) -> Result<(), LedgerError> {
        self.check(tx, signer)?;
        match &tx.payload {
            Payload::CreateNft {
                device_id,
                owner_id,
                token_name,
                public_key,
                issue_time,
            } => {
                let token = NftToken::new(token_name.clone(), *device_id, *public_key, owner_id.clone(), *issue_time);
                self.device_index.insert(*device_id, token.token_id);
                self.tokens.insert(token.token_id, token);
            }
            Payload::SetFlag {
                token_id,
                flag,
                counterparty,
            } => {
                let token = self.tokens.get_mut(token_id).expect("checked above");
                token.constraints.set(*flag);
                if let (Flag::Delegated | Flag::Transferred, Some(who)) = (flag, counterparty) {
                    self.controllers.insert(*token_id, who.clone());
                }
            }
            Payload::RecordEvent {
                stream,
                kind,
                body,
                sim_time,
            } => self.event_log.push(EventRecord {
                stream: stream.clone(),
                kind: kind.clone(),
                body: body.clone(),
                sim_time: *sim_time,
                tx_id: tx.tx_id,
                signer: tx.envelope.token_id,
            }),
            Payload::Query { .. } => {}
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("state serialization is infallible")
    }
}

fn signer_name(signer: &Signer) -> String {
    match signer {
        Signer::Anchor => "anchor".into(),
        Signer::Token(t) => t.owner_id.clone(),
    }
}
