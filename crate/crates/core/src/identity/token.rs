//! The non-fungible identity token binding a device to its verification key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::keys::PublicKey;
use super::puf::Response;
use crate::digest::Digest;
use crate::SimTime;

/// Access-control flags carried by a token. All start cleared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintFlags {
    pub revoked: bool,
    pub delegated: bool,
    pub transferred: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Revoked,
    Delegated,
    Transferred,
}

impl ConstraintFlags {
    pub fn get(&self, flag: Flag) -> bool {
        match flag {
            Flag::Revoked => self.revoked,
            Flag::Delegated => self.delegated,
            Flag::Transferred => self.transferred,
        }
    }

    pub fn set(&mut self, flag: Flag) {
        match flag {
            Flag::Revoked => self.revoked = true,
            Flag::Delegated => self.delegated = true,
            Flag::Transferred => self.transferred = true,
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Revoked => "revoked",
            Flag::Delegated => "delegated",
            Flag::Transferred => "transferred",
        })
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "revoked" => Ok(Flag::Revoked),
            "delegated" => Ok(Flag::Delegated),
            "transferred" => Ok(Flag::Transferred),
            other => Err(format!("unknown flag {other:?}")),
        }
    }
}

/// Ledger-resident identity token. Field order is the JSON-lines export order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftToken {
    pub token_id: Digest,
    pub token_name: String,
    pub device_id: Response,
    pub public_key: PublicKey,
    pub owner_id: String,
    pub constraints: ConstraintFlags,
    pub issue_time: SimTime,
}

impl NftToken {
    pub fn new(
        token_name: impl Into<String>,
        device_id: Response,
        public_key: PublicKey,
        owner_id: impl Into<String>,
        issue_time: SimTime,
    ) -> Self {
        let owner_id = owner_id.into();
        NftToken {
            token_id: token_id_for(&device_id, &public_key, &owner_id),
            token_name: token_name.into(),
            device_id,
            public_key,
            owner_id,
            constraints: ConstraintFlags::default(),
            issue_time,
        }
    }

    pub fn is_revoked(&self) -> bool {
        self.constraints.revoked
    }
}

/// `H(R ‖ pk ‖ owner_id)`.
pub fn token_id_for(device_id: &Response, public_key: &PublicKey, owner_id: &str) -> Digest {
    Digest::of_parts(&[&device_id.0, &public_key.0, owner_id.as_bytes()])
}
