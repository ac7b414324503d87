//! Append-only simulated ledger.
//!
//! Transactions pass endorsement (a quorum of endorsing peers re-verify the
//! signed envelope and the contract preconditions), optional notarization for
//! cross-cluster submissions, FIFO ordering by a single orderer, and block
//! cutting every `block_max_txs` transactions or `block_timeout_ms` of
//! simulated time. World state is a pure fold over committed blocks.

mod block;
mod peers;
mod state;
mod tx;

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{read_block_file, write_block_file, Block};
pub use peers::{Peer, PeerRole, PeerSet, Role};
pub use state::{EventRecord, RegistryState, Signer};
pub use tx::{Endorsement, Payload, QueryKey, Transaction};

use crate::digest::Digest;
use crate::identity::{
    self, AnchorKeys, DeviceKey, Flag, NftRegistry, NftToken, PublicKey, PufOracle, Response,
    TokenRegistry, Verdict,
};
use crate::SimTime;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("transaction {tx_id} rejected at endorsement: {reason}")]
    Rejected { tx_id: Digest, reason: String },
    #[error("duplicate transaction {0}")]
    Duplicate(Digest),
    #[error("device {} is already bound to a token", .0.to_hex())]
    AlreadyBound(Response),
    #[error("unknown token {0}")]
    UnknownToken(Digest),
    #[error("{actor} is not authorized to {action}")]
    Unauthorized { actor: String, action: String },
    #[error("transaction {tx_id} has {have} valid endorsements, quorum is {need}")]
    InsufficientEndorsements { tx_id: Digest, have: usize, need: usize },
    #[error("cross-cluster transaction {0} lacks a valid notarization")]
    MissingNotarization(Digest),
    #[error("integrity violation at block {height}: {detail}")]
    Integrity { height: u64, detail: String },
    #[error("clock cannot move backwards from {now} to {requested}")]
    ClockRegression { now: SimTime, requested: SimTime },
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("unknown peer {0}")]
    UnknownPeer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub anchor_mpk: PublicKey,
    pub endorsement_quorum: usize,
    pub endorsers: usize,
    pub committers: usize,
    pub block_max_txs: usize,
    pub block_timeout_ms: SimTime,
    /// Ordering, validation and commit time between block cut and commit.
    pub commit_delay_ms: SimTime,
    pub home_cluster: u32,
    pub peer_seed: u64,
}

impl LedgerConfig {
    pub fn new(anchor_mpk: PublicKey) -> Self {
        LedgerConfig {
            anchor_mpk,
            endorsement_quorum: 2,
            endorsers: 2,
            committers: 2,
            block_max_txs: 10,
            block_timeout_ms: 500,
            commit_delay_ms: 400,
            home_cluster: 0,
            peer_seed: 0,
        }
    }
}

/// Commit confirmation for one transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: Digest,
    pub height: u64,
    pub submitted_at: SimTime,
    pub committed_at: SimTime,
    pub latency_ms: SimTime,
}

struct Pending {
    tx: Transaction,
    arrived: SimTime,
}

pub struct Ledger {
    config: LedgerConfig,
    peers: PeerSet,
    anchor: Option<AnchorKeys>,
    blocks: Vec<Block>,
    committed: RegistryState,
    speculative: RegistryState,
    pending: VecDeque<Pending>,
    seen: HashSet<Digest>,
    now: SimTime,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Self {
        let peers = PeerSet::generate(config.peer_seed, config.home_cluster, config.endorsers, config.committers);
        Ledger {
            config,
            peers,
            anchor: None,
            blocks: Vec::new(),
            committed: RegistryState::default(),
            speculative: RegistryState::default(),
            pending: VecDeque::new(),
            seen: HashSet::new(),
            now: 0,
        }
    }

    /// Lets endorsers run full identity verification (PUF re-challenge)
    /// when a device oracle is supplied.
    pub fn with_anchor(mut self, anchor: AnchorKeys) -> Self {
        self.anchor = Some(anchor);
        self
    }

    /// Rebuilds a ledger from a block sequence, verifying every link.
    pub fn from_blocks(config: LedgerConfig, blocks: Vec<Block>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(config);
        let state = ledger.fold(&blocks)?;
        ledger.seen = blocks.iter().flat_map(|b| b.tx_list.iter().map(|t| t.tx_id)).collect();
        ledger.committed = state.clone();
        ledger.speculative = state;
        ledger.blocks = blocks;
        Ok(ledger)
    }

    pub fn open(config: LedgerConfig, path: &Path) -> Result<Self, LedgerError> {
        Self::from_blocks(config, read_block_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        write_block_file(path, &self.blocks)
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn peers(&self) -> &PeerSet {
        &self.peers
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn state(&self) -> &RegistryState {
        &self.committed
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Moves the clock to `t`, cutting any batch whose timeout expires on the way.
    pub fn advance_to(&mut self, t: SimTime) -> Result<Vec<Receipt>, LedgerError> {
        if t < self.now {
            return Err(LedgerError::ClockRegression {
                now: self.now,
                requested: t,
            });
        }
        let mut receipts = Vec::new();
        while let Some(deadline) = self.batch_deadline() {
            if deadline > t {
                break;
            }
            self.now = deadline;
            receipts.extend(self.cut_block(deadline));
        }
        self.now = t;
        Ok(receipts)
    }

    /// Simulated time at which the current batch times out, if any.
    pub fn batch_deadline(&self) -> Option<SimTime> {
        self.pending
            .front()
            .map(|p| p.arrived + self.config.block_timeout_ms)
    }

    /// An endorsing peer's check of `tx`: envelope verification, payload
    /// binding and contract preconditions against the pending world state.
    pub fn endorse(
        &self,
        peer_id: &str,
        tx: &Transaction,
        device: Option<&dyn PufOracle>,
    ) -> Result<Endorsement, LedgerError> {
        let peer = self
            .peers
            .by_id(peer_id)
            .filter(|p| p.info.role == Role::Endorser)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        if !tx.id_is_consistent() {
            return Err(LedgerError::Malformed("tx_id does not match contents".into()));
        }
        let signer = self.speculative.authenticate(tx, &self.config.anchor_mpk)?;
        if let (Some(device), Some(anchor), Signer::Token(_)) = (device, &self.anchor, &signer) {
            let verdict = identity::verify(&tx.envelope, &self.speculative, anchor, device);
            if verdict != Verdict::Accept {
                return Err(LedgerError::Rejected {
                    tx_id: tx.tx_id,
                    reason: format!("identity verification: {verdict:?}"),
                });
            }
        }
        self.speculative.check(tx, &signer)?;
        Ok(Endorsement {
            peer_id: peer.info.node_id.clone(),
            signature: peer.sign(&Endorsement::signing_bytes(&tx.tx_id)),
        })
    }

    /// Notary verification of a cross-cluster transaction's endorsements.
    pub fn notarize(&self, tx: &Transaction) -> Result<Endorsement, LedgerError> {
        self.check_endorsements(tx)?;
        let notary = self.peers.with_role(Role::Notary).next().expect("peer set has a notary");
        Ok(Endorsement {
            peer_id: notary.info.node_id.clone(),
            signature: notary.sign(&Endorsement::notary_signing_bytes(&tx.tx_id)),
        })
    }

    /// Collects the quorum of endorsements (and a notarization if needed).
    pub fn endorse_quorum(&self, tx: &mut Transaction, device: Option<&dyn PufOracle>) -> Result<(), LedgerError> {
        let endorsers: Vec<String> = self
            .peers
            .with_role(Role::Endorser)
            .take(self.config.endorsement_quorum)
            .map(|p| p.info.node_id.clone())
            .collect();
        for id in endorsers {
            let e = self.endorse(&id, tx, device)?;
            tx.endorsements.push(e);
        }
        if tx.origin_cluster != self.config.home_cluster {
            tx.notarization = Some(self.notarize(tx)?);
        }
        Ok(())
    }

    fn check_endorsements(&self, tx: &Transaction) -> Result<(), LedgerError> {
        let msg = Endorsement::signing_bytes(&tx.tx_id);
        let mut distinct = HashSet::new();
        for e in &tx.endorsements {
            if let Some(peer) = self.peers.by_id(&e.peer_id) {
                if peer.info.role == Role::Endorser && peer.public_key().verify(&msg, &e.signature) {
                    distinct.insert(&e.peer_id);
                }
            }
        }
        if distinct.len() < self.config.endorsement_quorum {
            return Err(LedgerError::InsufficientEndorsements {
                tx_id: tx.tx_id,
                have: distinct.len(),
                need: self.config.endorsement_quorum,
            });
        }
        Ok(())
    }

    fn check_notarization(&self, tx: &Transaction) -> Result<(), LedgerError> {
        if tx.origin_cluster == self.config.home_cluster {
            return Ok(());
        }
        let msg = Endorsement::notary_signing_bytes(&tx.tx_id);
        let ok = tx.notarization.as_ref().is_some_and(|n| {
            self.peers
                .by_id(&n.peer_id)
                .is_some_and(|p| p.info.role == Role::Notary && p.public_key().verify(&msg, &n.signature))
        });
        if ok {
            Ok(())
        } else {
            Err(LedgerError::MissingNotarization(tx.tx_id))
        }
    }

    /// Orderer intake: validates endorsements and appends to the pending
    /// batch. Returns receipts if the batch filled up and was cut.
    pub fn enqueue(&mut self, tx: Transaction) -> Result<Vec<Receipt>, LedgerError> {
        if self.seen.contains(&tx.tx_id) {
            return Err(LedgerError::Duplicate(tx.tx_id));
        }
        if !tx.id_is_consistent() {
            return Err(LedgerError::Malformed("tx_id does not match contents".into()));
        }
        self.check_endorsements(&tx)?;
        self.check_notarization(&tx)?;
        let signer = self.speculative.authenticate(&tx, &self.config.anchor_mpk)?;
        self.speculative.apply(&tx, &signer)?;
        self.seen.insert(tx.tx_id);
        self.pending.push_back(Pending { tx, arrived: self.now });
        if self.pending.len() >= self.config.block_max_txs {
            return Ok(self.cut_block(self.now));
        }
        Ok(Vec::new())
    }

    /// Cuts every pending transaction into blocks at the current time.
    pub fn flush(&mut self) -> Vec<Receipt> {
        let mut receipts = Vec::new();
        while !self.pending.is_empty() {
            receipts.extend(self.cut_block(self.now));
        }
        receipts
    }

    fn cut_block(&mut self, at: SimTime) -> Vec<Receipt> {
        let n = self.pending.len().min(self.config.block_max_txs);
        let txs: Vec<Transaction> = self.pending.drain(..n).map(|p| p.tx).collect();
        let height = self.height();
        let prev = self.blocks.last().map_or(Digest::ZERO, |b| b.block_hash);
        let committed_at = at + self.config.commit_delay_ms;
        let mut receipts = Vec::with_capacity(txs.len());
        for tx in &txs {
            let signer = self
                .committed
                .authenticate(tx, &self.config.anchor_mpk)
                .expect("speculative state admitted this transaction");
            self.committed
                .apply(tx, &signer)
                .expect("speculative state admitted this transaction");
            receipts.push(Receipt {
                tx_id: tx.tx_id,
                height,
                submitted_at: tx.sim_time_submitted,
                committed_at,
                latency_ms: committed_at.saturating_sub(tx.sim_time_submitted),
            });
        }
        log::trace!("cut block {height} with {} txs at {at}", txs.len());
        self.blocks.push(Block::new(height, prev, txs));
        receipts
    }

    /// Endorse, order and commit `tx` immediately.
    pub fn submit(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        self.submit_inner(tx, None)
    }

    /// As [`Ledger::submit`], with full PUF-backed identity verification.
    pub fn submit_with_device(&mut self, tx: Transaction, device: &dyn PufOracle) -> Result<Receipt, LedgerError> {
        self.submit_inner(tx, Some(device))
    }

    fn submit_inner(&mut self, mut tx: Transaction, device: Option<&dyn PufOracle>) -> Result<Receipt, LedgerError> {
        if self.seen.contains(&tx.tx_id) {
            return Err(LedgerError::Duplicate(tx.tx_id));
        }
        self.endorse_quorum(&mut tx, device)?;
        let id = tx.tx_id;
        let mut receipts = self.enqueue(tx)?;
        receipts.extend(self.flush());
        Ok(receipts
            .into_iter()
            .find(|r| r.tx_id == id)
            .expect("flushed transaction has a receipt"))
    }

    pub fn query(&self, key: &QueryKey) -> Option<NftToken> {
        self.committed.query(key)
    }

    pub fn set_flag(
        &mut self,
        token_id: Digest,
        flag: Flag,
        counterparty: Option<String>,
        actor: &DeviceKey,
    ) -> Result<NftToken, LedgerError> {
        let payload = Payload::SetFlag {
            token_id,
            flag,
            counterparty,
        };
        let tx = Transaction::signed_by_device(payload, actor, self.now, self.config.home_cluster);
        self.submit(tx)?;
        self.committed
            .token(&token_id)
            .ok_or(LedgerError::UnknownToken(token_id))
    }

    pub fn record_event(
        &mut self,
        stream: &str,
        kind: &str,
        body: serde_json::Value,
        signer: &DeviceKey,
    ) -> Result<Receipt, LedgerError> {
        let payload = Payload::RecordEvent {
            stream: stream.to_owned(),
            kind: kind.to_owned(),
            body,
            sim_time: self.now,
        };
        let tx = Transaction::signed_by_device(payload, signer, self.now, self.config.home_cluster);
        self.submit(tx)
    }

    /// Recomputes world state from the committed chain.
    pub fn replay(&self) -> Result<RegistryState, LedgerError> {
        self.fold(&self.blocks)
    }

    fn fold(&self, blocks: &[Block]) -> Result<RegistryState, LedgerError> {
        let mut state = RegistryState::default();
        let mut prev = Digest::ZERO;
        let mut seen = HashSet::new();
        for (i, block) in blocks.iter().enumerate() {
            let integrity = |detail: String| LedgerError::Integrity {
                height: block.height,
                detail,
            };
            if block.height != i as u64 {
                return Err(integrity(format!("expected height {i}")));
            }
            if block.prev_hash != prev {
                return Err(integrity("prev_hash does not link to predecessor".into()));
            }
            if !block.hash_is_consistent() {
                return Err(integrity("block_hash does not match contents".into()));
            }
            for tx in &block.tx_list {
                if !tx.id_is_consistent() {
                    return Err(integrity(format!("tx {} does not match its id", tx.tx_id)));
                }
                if !seen.insert(tx.tx_id) {
                    return Err(integrity(format!("tx {} committed twice", tx.tx_id)));
                }
                let replayed = self
                    .check_endorsements(tx)
                    .and_then(|_| self.check_notarization(tx))
                    .and_then(|_| state.authenticate(tx, &self.config.anchor_mpk))
                    .and_then(|signer| state.apply(tx, &signer));
                replayed.map_err(|e| integrity(format!("tx {} invalid on replay: {e}", tx.tx_id)))?;
            }
            prev = block.block_hash;
        }
        Ok(state)
    }
}

impl TokenRegistry for Ledger {
    fn token(&self, token_id: &Digest) -> Option<NftToken> {
        self.committed.token(token_id)
    }

    fn token_by_device(&self, device_id: &Response) -> Option<NftToken> {
        self.committed.token_by_device(device_id)
    }
}

impl NftRegistry for Ledger {
    type Error = LedgerError;

    fn create_nft(
        &mut self,
        anchor: &AnchorKeys,
        device_id: Response,
        owner_id: &str,
        token_name: &str,
        public_key: PublicKey,
    ) -> Result<NftToken, LedgerError> {
        if self.speculative.device_index.contains_key(&device_id) {
            return Err(LedgerError::AlreadyBound(device_id));
        }
        let payload = Payload::CreateNft {
            device_id,
            owner_id: owner_id.to_owned(),
            token_name: token_name.to_owned(),
            public_key,
            issue_time: self.now,
        };
        let tx = Transaction::signed_by_anchor(payload, anchor, self.now, self.config.home_cluster);
        self.submit(tx)?;
        Ok(self
            .committed
            .token_by_device(&device_id)
            .expect("committed create_nft"))
    }
}

#[cfg(test)]
mod tests;
