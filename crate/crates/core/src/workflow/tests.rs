use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use super::*;
use crate::identity::{enroll, setup, PufDevice};
use crate::ledger::LedgerConfig;

fn fixture() -> (WorkflowEngine, Ledger) {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let anchor = setup(128, &mut rng).unwrap();
    let mut ledger = Ledger::new(LedgerConfig::new(anchor.mpk()));
    let host = PufDevice::new("dtam-host", &mut rng);
    let key = enroll(&host, "dtam", &anchor, &mut ledger).unwrap();
    let mut engine = WorkflowEngine::new("dtam", key);
    for p in ["p1", "p2", "p3"] {
        engine.register_actor(p, ActorRole::Prosumer, None);
    }
    engine.register_actor("dso", ActorRole::DsoTso, None);
    engine.register_actor("dfasc", ActorRole::DfascContract, None);
    (engine, ledger)
}

fn ev(kind: EventKind, t: SimTime) -> Event {
    Event {
        kind,
        payload: json!({ "t": t }),
        sim_time: t,
    }
}

#[test]
fn first_transition_opens_bidding() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("wf", vec!["dso".into()]).unwrap();
    let s = eng.advance("wf", ev(EventKind::CreateFlexRequest, 10), &mut ledger).unwrap();
    assert_eq!(s, WorkflowState::Bidding);
}

#[test]
fn full_run_traces_four_kinds_in_order() {
    let (mut eng, mut ledger) = fixture();
    for p in ["p1", "p2", "p3"] {
        eng.subscribe(p, Topic::FlexBidRequest).unwrap();
    }
    eng.subscribe("dfasc", Topic::BidOffer).unwrap();
    eng.subscribe("dso", Topic::DfFulfilled).unwrap();
    eng.create_workflow("wf", vec!["dso".into()]).unwrap();
    let kinds = [
        EventKind::CreateFlexRequest,
        EventKind::BidOffer,
        EventKind::CreateDfScheduling,
        EventKind::ActivationSettlement,
    ];
    let mut states = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        states.push(eng.advance("wf", ev(*k, 10 + i as SimTime * 10), &mut ledger).unwrap());
    }
    assert_eq!(
        states,
        [WorkflowState::Bidding, WorkflowState::Bidding, WorkflowState::Scheduled, WorkflowState::Fulfilled]
    );
    let wf = eng.workflow("wf").unwrap();
    let history: Vec<EventKind> = wf.event_history.iter().map(|e| e.kind).collect();
    assert_eq!(history, kinds);
    // Ledger parity.
    let recorded: Vec<&str> = ledger.state().events_for("wf").map(|e| e.kind.as_str()).collect();
    assert_eq!(recorded, kinds.map(EventKind::as_str));
    let trace = eng.trace();
    assert_eq!(trace[0].recipients, ["p1", "p2", "p3"]);
    assert_eq!(trace[1].recipients, ["dfasc"]);
    assert_eq!(trace[3].recipients, ["dso"]);
    assert_eq!(eng.inbox("dso").len(), 1);
}

#[test]
fn terminal_state_rejects_everything() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("wf", vec![]).unwrap();
    eng.advance("wf", ev(EventKind::CreateFlexRequest, 1), &mut ledger).unwrap();
    eng.advance("wf", ev(EventKind::CreateDfScheduling, 2), &mut ledger).unwrap();
    eng.advance("wf", ev(EventKind::ActivationSettlement, 3), &mut ledger).unwrap();
    for (i, k) in [EventKind::CreateFlexRequest, EventKind::BidOffer, EventKind::CreateDfScheduling, EventKind::ActivationSettlement]
        .into_iter()
        .enumerate()
    {
        let err = eng.advance("wf", ev(k, 10 + i as SimTime), &mut ledger).unwrap_err();
        assert!(matches!(err, WorkflowError::IllegalTransition { state: WorkflowState::Fulfilled, .. }));
    }
    assert_eq!(ledger.state().events_for("wf").count(), eng.workflow("wf").unwrap().event_history.len());
}

#[test]
fn illegal_first_event_is_rejected_without_ledger_write() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("wf", vec![]).unwrap();
    let h = ledger.height();
    assert!(eng.advance("wf", ev(EventKind::BidOffer, 1), &mut ledger).is_err());
    assert_eq!(ledger.height(), h);
}

#[test]
fn events_must_move_forward_in_time() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("wf", vec![]).unwrap();
    eng.advance("wf", ev(EventKind::CreateFlexRequest, 5), &mut ledger).unwrap();
    assert!(matches!(
        eng.advance("wf", ev(EventKind::BidOffer, 5), &mut ledger),
        Err(WorkflowError::OutOfOrder { .. })
    ));
}

#[test]
fn bid_deadline_closes_bidding() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("wf", vec![]).unwrap();
    eng.advance("wf", ev(EventKind::CreateFlexRequest, 5), &mut ledger).unwrap();
    eng.advance("wf", ev(EventKind::BidOffer, 105), &mut ledger).unwrap();
    assert!(matches!(
        eng.advance("wf", ev(EventKind::BidOffer, 106), &mut ledger),
        Err(WorkflowError::BiddingClosed(_))
    ));
}

#[test]
fn publish_fan_out_and_idempotent_subscribe() {
    let (mut eng, _) = fixture();
    assert_eq!(eng.publish(Topic::FlexBidRequest, json!({}), "x"), 0);
    for p in ["p1", "p2", "p3"] {
        eng.subscribe(p, Topic::FlexBidRequest).unwrap();
    }
    eng.subscribe("p1", Topic::FlexBidRequest).unwrap();
    assert_eq!(eng.publish(Topic::FlexBidRequest, json!({"q": 1}), "x"), 3);
    assert_eq!(eng.inbox("p1").len(), 1);
    assert!(matches!(eng.subscribe("ghost", Topic::BidOffer), Err(WorkflowError::UnknownActor(_))));
    assert!(matches!("flex_offer".parse::<Topic>(), Err(WorkflowError::UnknownTopic(_))));
    assert_eq!("df_fulfilled".parse::<Topic>().unwrap(), Topic::DfFulfilled);
}

#[test]
fn independent_workflows_do_not_interfere() {
    let (mut eng, mut ledger) = fixture();
    eng.create_workflow("a", vec![]).unwrap();
    eng.create_workflow("b", vec![]).unwrap();
    assert!(matches!(eng.create_workflow("a", vec![]), Err(WorkflowError::DuplicateWorkflow(_))));
    eng.advance("a", ev(EventKind::CreateFlexRequest, 1), &mut ledger).unwrap();
    assert_eq!(eng.workflow("b").unwrap().state, WorkflowState::Created);
}
