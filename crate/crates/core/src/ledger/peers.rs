use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::identity::{KeyPair, PublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Endorser,
    Orderer,
    Notary,
    Committer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Endorser => "endorser",
            Role::Orderer => "orderer",
            Role::Notary => "notary",
            Role::Committer => "committer",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerRole {
    pub role: Role,
    pub node_id: String,
    pub cluster_id: u32,
}

#[derive(Clone, Debug)]
pub struct Peer {
    pub info: PeerRole,
    keys: KeyPair,
}

impl Peer {
    pub fn public_key(&self) -> PublicKey {
        self.keys.public_key()
    }

    pub(crate) fn sign(&self, message: &[u8]) -> crate::identity::Signature {
        self.keys.sign(message)
    }
}

/// The fixed peer population of one simulated network.
#[derive(Clone, Debug)]
pub struct PeerSet {
    peers: Vec<Peer>,
}

impl PeerSet {
    /// Builds `endorsers` endorsing peers, one orderer, one notary and
    /// `committers` committing peers, all in `cluster`. Keys come from `seed`
    /// so a replaying node can reconstruct them.
    pub fn generate(seed: u64, cluster: u32, endorsers: usize, committers: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut peers = Vec::new();
        let mut push = |role: Role, idx: usize, rng: &mut ChaCha20Rng| {
            let mut key_seed = [0u8; 32];
            rng.fill_bytes(&mut key_seed);
            peers.push(Peer {
                info: PeerRole {
                    role,
                    node_id: format!("{role}-{idx}"),
                    cluster_id: cluster,
                },
                keys: KeyPair::from_seed(key_seed),
            });
        };
        for i in 0..endorsers {
            push(Role::Endorser, i, &mut rng);
        }
        push(Role::Orderer, 0, &mut rng);
        push(Role::Notary, 0, &mut rng);
        for i in 0..committers {
            push(Role::Committer, i, &mut rng);
        }
        PeerSet { peers }
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Peer> {
        self.peers.iter().filter(move |p| p.info.role == role)
    }

    pub fn by_id(&self, node_id: &str) -> Option<&Peer> {
        self.peers.iter().find(|p| p.info.node_id == node_id)
    }

    pub fn roles(&self) -> Vec<PeerRole> {
        self.peers.iter().map(|p| p.info.clone()).collect()
    }
}
