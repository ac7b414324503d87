use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::identity::{enroll, setup, PufDevice};

struct Net {
    anchor: AnchorKeys,
    ledger: Ledger,
    rng: ChaCha20Rng,
}

fn net() -> Net {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let anchor = setup(128, &mut rng).unwrap();
    let ledger = Ledger::new(LedgerConfig::new(anchor.mpk())).with_anchor(anchor.clone());
    Net { anchor, ledger, rng }
}

impl Net {
    fn device(&mut self, owner: &str) -> (PufDevice, DeviceKey) {
        let dev = PufDevice::new(format!("{owner}-meter"), &mut self.rng);
        let key = enroll(&dev, owner, &self.anchor, &mut self.ledger).unwrap();
        (dev, key)
    }
}

fn event_tx(key: &DeviceKey, n: u64, now: SimTime) -> Transaction {
    let payload = Payload::RecordEvent {
        stream: "s".into(),
        kind: "reading".into(),
        body: serde_json::json!({ "n": n }),
        sim_time: now,
    };
    Transaction::signed_by_device(payload, key, now, 0)
}

#[test]
fn create_nft_commits_in_next_block() {
    let mut n = net();
    let h0 = n.ledger.height();
    let (dev, key) = n.device("alice");
    assert_eq!(n.ledger.height(), h0 + 1);
    let token = n.ledger.query(&QueryKey::Token(key.token_id)).unwrap();
    let r = dev.puf_respond(&identity::derive_challenge(&n.anchor, identity::ENROLLMENT_CHALLENGE_INDEX));
    assert_eq!(n.ledger.query(&QueryKey::Device(r)).unwrap(), token);
    assert_eq!(token.token_id, identity::token_id_for(&r, &key.public_key(), "alice"));
}

#[test]
fn second_create_nft_for_same_device_fails() {
    let mut n = net();
    let (dev, _) = n.device("alice");
    let err = enroll(&dev, "alice", &n.anchor, &mut n.ledger).unwrap_err();
    assert!(matches!(err, identity::IdentityError::AlreadyEnrolled(_)));
    let r = dev.puf_respond(&identity::derive_challenge(&n.anchor, 0));
    let err = n
        .ledger
        .create_nft(&n.anchor, r, "mallory", "x", PublicKey([1; 32]))
        .unwrap_err();
    assert!(matches!(err, LedgerError::AlreadyBound(_)));
}

#[test]
fn issue_time_is_commit_time_minus_pipeline_delay() {
    let mut n = net();
    n.ledger.advance_to(1_000).unwrap();
    let dev = PufDevice::new("m", &mut n.rng);
    let r = dev.puf_respond(&identity::derive_challenge(&n.anchor, 0));
    let payload = Payload::CreateNft {
        device_id: r,
        owner_id: "o".into(),
        token_name: "m".into(),
        public_key: PublicKey([3; 32]),
        issue_time: n.ledger.now(),
    };
    let tx = Transaction::signed_by_anchor(payload, &n.anchor, n.ledger.now(), 0);
    let receipt = n.ledger.submit(tx).unwrap();
    let token = n.ledger.query(&QueryKey::Device(r)).unwrap();
    assert_eq!(token.issue_time, receipt.committed_at - n.ledger.config().commit_delay_ms);
    assert_eq!(receipt.latency_ms, n.ledger.config().commit_delay_ms);
}

#[test]
fn only_the_anchor_mints_tokens() {
    let mut n = net();
    let (_, key) = n.device("alice");
    let payload = Payload::CreateNft {
        device_id: Response([9; 32]),
        owner_id: "alice".into(),
        token_name: "rogue".into(),
        public_key: key.public_key(),
        issue_time: 0,
    };
    let tx = Transaction::signed_by_device(payload, &key, 0, 0);
    assert!(matches!(n.ledger.submit(tx), Err(LedgerError::Unauthorized { .. })));
}

#[test]
fn query_is_read_only() {
    let mut n = net();
    n.device("alice");
    let h = n.ledger.height();
    assert!(n.ledger.query(&QueryKey::Device(Response([0; 32]))).is_none());
    assert!(n.ledger.query(&QueryKey::Token(Digest([0; 32]))).is_none());
    assert_eq!(n.ledger.height(), h);
}

#[test]
fn revoked_token_cannot_transact() {
    let mut n = net();
    let (dev, key) = n.device("alice");
    n.ledger.set_flag(key.token_id, Flag::Revoked, None, &key).unwrap();
    let env = key.sign(b"hello", 0);
    assert_eq!(
        identity::verify(&env, &n.ledger, &n.anchor, &dev),
        Verdict::Halted(identity::Halt::Revoked)
    );
    let err = n.ledger.submit(event_tx(&key, 1, 0)).unwrap_err();
    assert!(matches!(err, LedgerError::Rejected { .. }), "{err}");
}

#[test]
fn non_owner_cannot_set_flags() {
    let mut n = net();
    let (_, alice) = n.device("alice");
    let (_, bob) = n.device("bob");
    let err = n.ledger.set_flag(alice.token_id, Flag::Revoked, None, &bob).unwrap_err();
    assert!(matches!(err, LedgerError::Unauthorized { .. }));
    assert!(!n.ledger.query(&QueryKey::Token(alice.token_id)).unwrap().constraints.revoked);
}

#[test]
fn delegation_moves_flag_authority_to_delegate() {
    let mut n = net();
    let (_, alice) = n.device("alice");
    let (_, bob) = n.device("bob");
    let t = n
        .ledger
        .set_flag(alice.token_id, Flag::Delegated, Some("bob".into()), &alice)
        .unwrap();
    assert!(t.constraints.delegated);
    assert_eq!(n.ledger.state().controller_of(&t), "bob");
    // The owner no longer holds flag authority.
    assert!(matches!(
        n.ledger.set_flag(alice.token_id, Flag::Revoked, None, &alice),
        Err(LedgerError::Unauthorized { .. })
    ));
    let t = n.ledger.set_flag(alice.token_id, Flag::Revoked, None, &bob).unwrap();
    assert!(t.constraints.revoked);
}

#[test]
fn delegation_requires_counterparty() {
    let mut n = net();
    let (_, alice) = n.device("alice");
    assert!(matches!(
        n.ledger.set_flag(alice.token_id, Flag::Delegated, None, &alice),
        Err(LedgerError::Malformed(_))
    ));
}

#[test]
fn replayed_tx_is_duplicate() {
    let mut n = net();
    let (_, key) = n.device("alice");
    let tx = event_tx(&key, 1, 0);
    n.ledger.submit(tx.clone()).unwrap();
    assert!(matches!(n.ledger.submit(tx), Err(LedgerError::Duplicate(_))));
}

#[test]
fn blocks_cut_by_size_then_timeout() {
    let mut n = net();
    let (_, key) = n.device("alice");
    let h = n.ledger.height();
    n.ledger.advance_to(10_000).unwrap();
    let mut receipts = Vec::new();
    for i in 0..13 {
        let mut tx = event_tx(&key, i, n.ledger.now());
        n.ledger.endorse_quorum(&mut tx, None).unwrap();
        receipts.extend(n.ledger.enqueue(tx).unwrap());
    }
    assert_eq!(n.ledger.height(), h + 1);
    assert_eq!(receipts.len(), 10);
    assert_eq!(n.ledger.pending_len(), 3);
    assert_eq!(n.ledger.batch_deadline(), Some(10_500));
    assert!(n.ledger.advance_to(10_499).unwrap().is_empty());
    let late = n.ledger.advance_to(20_000).unwrap();
    assert_eq!(late.len(), 3);
    assert_eq!(late[0].committed_at, 10_500 + n.ledger.config().commit_delay_ms);
    assert_eq!(n.ledger.height(), h + 2);
}

#[test]
fn enqueue_without_quorum_is_refused() {
    let mut n = net();
    let (_, key) = n.device("alice");
    let mut tx = event_tx(&key, 0, 0);
    let e = n.ledger.endorse("endorser-0", &tx, None).unwrap();
    tx.endorsements.push(e.clone());
    tx.endorsements.push(e);
    assert!(matches!(
        n.ledger.enqueue(tx),
        Err(LedgerError::InsufficientEndorsements { have: 1, need: 2, .. })
    ));
}

#[test]
fn cross_cluster_needs_notary() {
    let mut n = net();
    let (_, key) = n.device("alice");
    let payload = Payload::RecordEvent {
        stream: "x".into(),
        kind: "k".into(),
        body: serde_json::Value::Null,
        sim_time: 0,
    };
    let mut tx = Transaction::signed_by_device(payload, &key, 0, 3);
    for id in ["endorser-0", "endorser-1"] {
        let e = n.ledger.endorse(id, &tx, None).unwrap();
        tx.endorsements.push(e);
    }
    assert!(matches!(n.ledger.enqueue(tx.clone()), Err(LedgerError::MissingNotarization(_))));
    tx.notarization = Some(n.ledger.notarize(&tx).unwrap());
    n.ledger.enqueue(tx).unwrap();
    n.ledger.flush();
    assert!(n.ledger.replay().is_ok());
}

#[test]
fn full_mode_endorsement_checks_the_puf() {
    let mut n = net();
    let (dev, key) = n.device("alice");
    let other = PufDevice::new("clone", &mut n.rng);
    let err = n.ledger.submit_with_device(event_tx(&key, 1, 0), &other).unwrap_err();
    assert!(matches!(err, LedgerError::Rejected { .. }));
    n.ledger.submit_with_device(event_tx(&key, 1, 0), &dev).unwrap();
}

#[test]
fn empty_chain_replays_to_empty_state() {
    let n = net();
    assert_eq!(n.ledger.replay().unwrap(), RegistryState::default());
}

#[test]
fn replay_matches_live_state_and_file_round_trip() {
    let mut n = net();
    let (_, a) = n.device("alice");
    let (_, b) = n.device("bob");
    n.ledger.record_event("wf-1", "CREATE_FLEX_REQUEST", serde_json::json!({"q": 10.5}), &a).unwrap();
    n.ledger.set_flag(b.token_id, Flag::Transferred, Some("carol".into()), &b).unwrap();
    let live = n.ledger.state().to_canonical_json();
    assert_eq!(n.ledger.replay().unwrap().to_canonical_json(), live);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    n.ledger.save(&path).unwrap();
    let reopened = Ledger::open(n.ledger.config().clone(), &path).unwrap();
    assert_eq!(reopened.state().to_canonical_json(), live);
    assert_eq!(reopened.blocks(), n.ledger.blocks());
}

#[test]
fn mutated_byte_is_an_integrity_violation() {
    let mut n = net();
    let (_, a) = n.device("alice");
    n.ledger.record_event("wf", "K", serde_json::json!({"v": 1}), &a).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    n.ledger.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // Flip the owner name inside the first create_nft payload.
    let tampered = text.replacen("\"owner_id\":\"alice\"", "\"owner_id\":\"alicf\"", 1);
    assert_ne!(tampered, text);
    std::fs::write(&path, tampered).unwrap();
    let err = Ledger::open(n.ledger.config().clone(), &path).err().unwrap();
    assert!(matches!(err, LedgerError::Integrity { .. }), "{err}");
}

#[test]
fn broken_link_is_detected() {
    let mut n = net();
    n.device("alice");
    n.device("bob");
    let mut blocks = n.ledger.blocks().to_vec();
    blocks[1].prev_hash = Digest([1; 32]);
    let err = Ledger::from_blocks(n.ledger.config().clone(), blocks).err().unwrap();
    assert!(matches!(err, LedgerError::Integrity { height: 1, .. }));
}

#[test]
fn block_file_is_one_object_per_line_with_stable_keys() {
    let mut n = net();
    n.device("alice");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    n.ledger.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let line = text.lines().next().unwrap();
    assert!(line.starts_with("{\"height\":0,\"prev_hash\":\""), "{line}");
    let h = line.find("\"block_hash\"").unwrap();
    let t = line.find("\"txs\"").unwrap();
    assert!(h < t);
    assert!(line.contains(&"0".repeat(64)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Arbitrary interleavings of events, revocations and cut timings replay
    // to the live state, and each tx id lands in at most one block.
    #[test]
    fn replay_equals_live_state(ops in proptest::collection::vec((0u8..4, 0usize..3, 0u64..700), 1..30)) {
        let mut n = net();
        let keys: Vec<DeviceKey> = ["a", "b", "c"].iter().map(|o| n.device(o).1).collect();
        let mut counter = 0;
        for (op, who, dt) in ops {
            let t = n.ledger.now() + dt;
            n.ledger.advance_to(t).unwrap();
            counter += 1;
            match op {
                0 | 1 => {
                    let mut tx = event_tx(&keys[who], counter, t);
                    if n.ledger.endorse_quorum(&mut tx, None).is_ok() {
                        n.ledger.enqueue(tx).unwrap();
                    }
                }
                2 => {
                    let _ = n.ledger.set_flag(keys[who].token_id, Flag::Revoked, None, &keys[who]);
                }
                _ => { n.ledger.flush(); }
            }
        }
        n.ledger.flush();
        prop_assert_eq!(n.ledger.replay().unwrap().to_canonical_json(), n.ledger.state().to_canonical_json());
        let mut ids = std::collections::HashSet::new();
        for b in n.ledger.blocks() {
            for tx in &b.tx_list {
                prop_assert!(ids.insert(tx.tx_id));
            }
        }
        for w in n.ledger.blocks().windows(2) {
            prop_assert_eq!(w[1].prev_hash, w[0].block_hash);
        }
    }
}
