//! Event-driven trading workflow.
//!
//! Each flexibility request runs one workflow through
//! `Created → Bidding → Scheduled → Fulfilled`. Every event is recorded on
//! the ledger (stream = workflow id) before its notification is published.

mod bus;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{Notification, NotificationBus, Topic};

use crate::digest::Digest;
use crate::identity::DeviceKey;
use crate::ledger::{Ledger, LedgerError};
use crate::SimTime;

pub const DEFAULT_BID_DEADLINE_TICKS: SimTime = 100;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("unknown workflow {0}")]
    UnknownWorkflow(String),
    #[error("workflow {0} already exists")]
    DuplicateWorkflow(String),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("illegal transition: {event} in state {state:?}")]
    IllegalTransition { state: WorkflowState, event: EventKind },
    #[error("bidding on {0} is closed")]
    BiddingClosed(String),
    #[error("event at {at} does not follow previous event at {last}")]
    OutOfOrder { last: SimTime, at: SimTime },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkflowState {
    Created,
    Bidding,
    Scheduled,
    Fulfilled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    CreateFlexRequest,
    BidOffer,
    CreateDfScheduling,
    ActivationSettlement,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::CreateFlexRequest => "CREATE_FLEX_REQUEST",
            EventKind::BidOffer => "BID_OFFER",
            EventKind::CreateDfScheduling => "CREATE_DF_SCHEDULING",
            EventKind::ActivationSettlement => "ACTIVATION_SETTLEMENT",
        }
    }

    /// The notification each event publishes.
    pub fn topic(self) -> Topic {
        match self {
            EventKind::CreateFlexRequest => Topic::FlexBidRequest,
            EventKind::BidOffer => Topic::BidOffer,
            EventKind::CreateDfScheduling => Topic::DfScheduling,
            EventKind::ActivationSettlement => Topic::DfFulfilled,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl WorkflowState {
    /// State after `event`, or `None` if the event is illegal here.
    pub fn next(self, event: EventKind) -> Option<WorkflowState> {
        use EventKind::*;
        use WorkflowState::*;
        match (self, event) {
            (Created, CreateFlexRequest) => Some(Bidding),
            (Bidding, BidOffer) => Some(Bidding),
            (Bidding, CreateDfScheduling) => Some(Scheduled),
            (Scheduled, ActivationSettlement) => Some(Fulfilled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub sim_time: SimTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub workflow_id: String,
    pub actors: Vec<String>,
    pub state: WorkflowState,
    pub event_history: Vec<Event>,
    pub bidding_open: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorRole {
    Prosumer,
    DsoTso,
    DfascContract,
    Resource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: String,
    pub role: ActorRole,
    pub subscriptions: Vec<Topic>,
    /// Ledger identity; contract actors may run without one.
    pub token_id: Option<Digest>,
}

/// One row of the exported workflow trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sim_time: SimTime,
    pub workflow_id: String,
    pub event_kind: EventKind,
    pub notification_topic: Topic,
    pub recipients: Vec<String>,
}

pub struct WorkflowEngine {
    actors: BTreeMap<String, Actor>,
    workflows: BTreeMap<String, Workflow>,
    bus: NotificationBus,
    trace: Vec<TraceRecord>,
    /// Identity of the event-recording contract.
    recorder: DeviceKey,
    recorder_id: String,
    pub bid_deadline_ticks: SimTime,
}

impl WorkflowEngine {
    pub fn new(recorder_id: impl Into<String>, recorder: DeviceKey) -> Self {
        WorkflowEngine {
            actors: BTreeMap::new(),
            workflows: BTreeMap::new(),
            bus: NotificationBus::default(),
            trace: Vec::new(),
            recorder,
            recorder_id: recorder_id.into(),
            bid_deadline_ticks: DEFAULT_BID_DEADLINE_TICKS,
        }
    }

    pub fn register_actor(&mut self, actor_id: &str, role: ActorRole, token_id: Option<Digest>) {
        self.actors.entry(actor_id.to_owned()).or_insert_with(|| Actor {
            actor_id: actor_id.to_owned(),
            role,
            subscriptions: Vec::new(),
            token_id,
        });
    }

    pub fn actor(&self, actor_id: &str) -> Option<&Actor> {
        self.actors.get(actor_id)
    }

    pub fn actors_with_role(&self, role: ActorRole) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(move |a| a.role == role)
    }

    pub fn subscribe(&mut self, actor_id: &str, topic: Topic) -> Result<(), WorkflowError> {
        let actor = self
            .actors
            .get_mut(actor_id)
            .ok_or_else(|| WorkflowError::UnknownActor(actor_id.to_owned()))?;
        if !actor.subscriptions.contains(&topic) {
            actor.subscriptions.push(topic);
        }
        self.bus.subscribe(actor_id, topic);
        Ok(())
    }

    /// Ad-hoc publish outside a workflow step. Returns the delivery count.
    pub fn publish(&mut self, topic: Topic, payload: serde_json::Value, publisher: &str) -> usize {
        self.bus
            .publish(Notification {
                topic,
                payload,
                publisher: publisher.to_owned(),
            })
            .len()
    }

    pub fn bus(&self) -> &NotificationBus {
        &self.bus
    }

    pub fn inbox(&self, actor_id: &str) -> &[Notification] {
        self.bus.inbox(actor_id)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_json(&self) -> String {
        serde_json::to_string_pretty(&self.trace).expect("trace serialization is infallible")
    }

    pub fn workflow(&self, id: &str) -> Option<&Workflow> {
        self.workflows.get(id)
    }

    pub fn workflows(&self) -> impl Iterator<Item = &Workflow> {
        self.workflows.values()
    }

    pub fn create_workflow(&mut self, workflow_id: &str, actors: Vec<String>) -> Result<(), WorkflowError> {
        if self.workflows.contains_key(workflow_id) {
            return Err(WorkflowError::DuplicateWorkflow(workflow_id.to_owned()));
        }
        self.workflows.insert(
            workflow_id.to_owned(),
            Workflow {
                workflow_id: workflow_id.to_owned(),
                actors,
                state: WorkflowState::Created,
                event_history: Vec::new(),
                bidding_open: false,
            },
        );
        Ok(())
    }

    pub fn close_bidding(&mut self, workflow_id: &str) -> Result<(), WorkflowError> {
        self.workflows
            .get_mut(workflow_id)
            .ok_or_else(|| WorkflowError::UnknownWorkflow(workflow_id.to_owned()))?
            .bidding_open = false;
        Ok(())
    }

    /// Whether `workflow_id` accepts a bid at `at`.
    pub fn bidding_open_at(&self, workflow_id: &str, at: SimTime) -> bool {
        self.workflows.get(workflow_id).is_some_and(|wf| {
            wf.state == WorkflowState::Bidding
                && wf.bidding_open
                && wf
                    .event_history
                    .first()
                    .is_some_and(|first| at <= first.sim_time + self.bid_deadline_ticks)
        })
    }

    /// Applies `event`: transition check, ledger record, history append,
    /// then the matching notification.
    pub fn advance(
        &mut self,
        workflow_id: &str,
        event: Event,
        ledger: &mut Ledger,
    ) -> Result<WorkflowState, WorkflowError> {
        let wf = self
            .workflows
            .get(workflow_id)
            .ok_or_else(|| WorkflowError::UnknownWorkflow(workflow_id.to_owned()))?;
        let next = wf.state.next(event.kind).ok_or(WorkflowError::IllegalTransition {
            state: wf.state,
            event: event.kind,
        })?;
        if let Some(last) = wf.event_history.last() {
            if event.sim_time <= last.sim_time {
                return Err(WorkflowError::OutOfOrder {
                    last: last.sim_time,
                    at: event.sim_time,
                });
            }
        }
        if event.kind == EventKind::BidOffer && !self.bidding_open_at(workflow_id, event.sim_time) {
            return Err(WorkflowError::BiddingClosed(workflow_id.to_owned()));
        }

        ledger.advance_to(event.sim_time)?;
        ledger.record_event(workflow_id, event.kind.as_str(), event.payload.clone(), &self.recorder)?;

        let wf = self.workflows.get_mut(workflow_id).expect("checked above");
        wf.state = next;
        if event.kind == EventKind::CreateFlexRequest {
            wf.bidding_open = true;
        }
        wf.event_history.push(event.clone());

        let topic = event.kind.topic();
        let recipients = self.bus.publish(Notification {
            topic,
            payload: event.payload,
            publisher: self.recorder_id.clone(),
        });
        self.trace.push(TraceRecord {
            sim_time: event.sim_time,
            workflow_id: workflow_id.to_owned(),
            event_kind: event.kind,
            notification_topic: topic,
            recipients,
        });
        Ok(next)
    }
}

#[cfg(test)]
mod tests;
