//! The contract engine tying market, scheduling, workflow and ledger together.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde_json::json;

use super::clearing::{clear_market, Clearing};
use super::csp::{build_csp, Assignment, CspInstance, DomainTable};
use super::model::{Bid, FlexRequest, FlexResource, Schedule, SetpointAction};
use super::AggregatorError;
use crate::identity::{enroll, AnchorKeys, PufDevice};
use crate::ledger::{Ledger, LedgerConfig};
use crate::workflow::{ActorRole, Event, EventKind, Topic, WorkflowEngine};
use crate::SimTime;

/// Contract identity recording workflow events on the ledger.
pub const RECORDER_ID: &str = "dtam";
/// Actor id of the aggregator contract itself.
pub const DFASC_ID: &str = "dfasc";

/// Everything the contract tracks for one request.
#[derive(Clone, Debug)]
pub struct RequestBook {
    pub request: FlexRequest,
    pub bids: Vec<Bid>,
    pub clearing: Option<Clearing>,
    pub schedule: Option<Schedule>,
    /// Setpoints that were live before the schedule took effect.
    pub restore: BTreeMap<String, SetpointAction>,
    pub applied: bool,
}

pub struct Dfasc {
    ledger: Ledger,
    workflow: WorkflowEngine,
    resources: BTreeMap<String, FlexResource>,
    setpoints: BTreeMap<String, SetpointAction>,
    books: BTreeMap<String, RequestBook>,
    table: DomainTable,
    anchor: AnchorKeys,
    rng: Box<dyn RngCore + Send>,
    now: SimTime,
}

impl Dfasc {
    /// A fresh deployment: an empty ledger trusting `anchor`, with the
    /// recording contract enrolled. `rng` seeds simulated PUF hardware.
    pub fn new(anchor: AnchorKeys, config: LedgerConfig, mut rng: Box<dyn RngCore + Send>) -> Result<Self, AggregatorError> {
        let mut ledger = Ledger::new(config).with_anchor(anchor.clone());
        let host = PufDevice::new(RECORDER_ID, &mut *rng);
        let recorder = enroll(&host, RECORDER_ID, &anchor, &mut ledger)?;
        let mut workflow = WorkflowEngine::new(RECORDER_ID, recorder);
        workflow.register_actor(DFASC_ID, ActorRole::DfascContract, None);
        workflow.subscribe(DFASC_ID, Topic::BidOffer)?;
        Ok(Dfasc {
            ledger,
            workflow,
            resources: BTreeMap::new(),
            setpoints: BTreeMap::new(),
            books: BTreeMap::new(),
            table: DomainTable::default(),
            anchor,
            rng,
            now: 0,
        })
    }

    pub fn with_domain_table(mut self, table: DomainTable) -> Self {
        self.table = table;
        self
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn workflow(&self) -> &WorkflowEngine {
        &self.workflow
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn book(&self, request_id: &str) -> Option<&RequestBook> {
        self.books.get(request_id)
    }

    pub fn resources(&self) -> impl Iterator<Item = &FlexResource> {
        self.resources.values()
    }

    /// Live setpoint of every registered resource.
    pub fn setpoints(&self) -> &BTreeMap<String, SetpointAction> {
        &self.setpoints
    }

    fn enroll_actor(&mut self, actor_id: &str, role: ActorRole, topic: Topic) -> Result<(), AggregatorError> {
        if self.workflow.actor(actor_id).is_none() {
            let device = PufDevice::new(actor_id, &mut *self.rng);
            let key = enroll(&device, actor_id, &self.anchor, &mut self.ledger)?;
            self.workflow.register_actor(actor_id, role, Some(key.token_id));
        }
        self.workflow.subscribe(actor_id, topic)?;
        Ok(())
    }

    /// Enrolls a prosumer and subscribes it to bid requests.
    pub fn register_prosumer(&mut self, prosumer_id: &str) -> Result<(), AggregatorError> {
        self.enroll_actor(prosumer_id, ActorRole::Prosumer, Topic::FlexBidRequest)
    }

    /// Enrolls a grid operator and subscribes it to fulfilment notices.
    pub fn register_operator(&mut self, operator_id: &str) -> Result<(), AggregatorError> {
        self.enroll_actor(operator_id, ActorRole::DsoTso, Topic::DfFulfilled)
    }

    /// Enrolls a flexible resource at its baseline setpoint.
    pub fn add_resource(&mut self, resource: FlexResource) -> Result<(), AggregatorError> {
        resource.validate()?;
        if self.resources.contains_key(&resource.resource_id) {
            return Err(AggregatorError::Validation(format!(
                "resource {} already registered",
                resource.resource_id
            )));
        }
        self.enroll_actor(&resource.resource_id, ActorRole::Resource, Topic::DfScheduling)?;
        self.setpoints
            .insert(resource.resource_id.clone(), resource.baseline_setpoint);
        self.resources.insert(resource.resource_id.clone(), resource);
        Ok(())
    }

    fn book_mut(&mut self, request_id: &str) -> Result<&mut RequestBook, AggregatorError> {
        self.books
            .get_mut(request_id)
            .ok_or_else(|| AggregatorError::UnknownRequest(request_id.to_owned()))
    }

    /// Records `kind` on the request's workflow at the current time, then
    /// moves the clock one tick so the next event is strictly later.
    fn step(&mut self, request_id: &str, kind: EventKind, payload: serde_json::Value) -> Result<(), AggregatorError> {
        let event = Event {
            kind,
            payload,
            sim_time: self.now,
        };
        self.workflow.advance(request_id, event, &mut self.ledger)?;
        self.now += 1;
        Ok(())
    }

    /// Moves the clock forward, applying any schedule whose window opens.
    pub fn advance_clock(&mut self, t: SimTime) -> Result<(), AggregatorError> {
        if t < self.now {
            return Err(AggregatorError::Validation(format!("clock cannot move back from {} to {t}", self.now)));
        }
        self.now = t;
        self.ledger.advance_to(t)?;
        for book in self.books.values_mut() {
            let Some(schedule) = &book.schedule else { continue };
            if book.applied || t < schedule.window.start_ms() {
                continue;
            }
            for (id, sp) in &schedule.assignment {
                let prev = self.setpoints.insert(id.clone(), *sp).expect("scheduled resource is registered");
                book.restore.entry(id.clone()).or_insert(prev);
            }
            book.applied = true;
        }
        Ok(())
    }

    /// Step 1: opens a workflow for `req` and notifies prosumers.
    pub fn create_flex_request(&mut self, req: FlexRequest) -> Result<(), AggregatorError> {
        req.validate()?;
        if self.books.contains_key(&req.request_id) {
            return Err(AggregatorError::Validation(format!("request {} already exists", req.request_id)));
        }
        let actors = vec![req.issuer.clone(), DFASC_ID.to_owned()];
        self.workflow.create_workflow(&req.request_id, actors)?;
        let payload = serde_json::to_value(&req).expect("request serializes");
        let id = req.request_id.clone();
        self.books.insert(
            id.clone(),
            RequestBook {
                request: req,
                bids: Vec::new(),
                clearing: None,
                schedule: None,
                restore: BTreeMap::new(),
                applied: false,
            },
        );
        self.step(&id, EventKind::CreateFlexRequest, payload)
    }

    /// Step 2: a prosumer offers flexibility backed by its resources.
    pub fn submit_bid(&mut self, bid: Bid, request_id: &str) -> Result<(), AggregatorError> {
        if !self.workflow.bidding_open_at(request_id, self.now) {
            self.book_mut(request_id)?;
            return Err(AggregatorError::State(format!("bidding on {request_id} is closed")));
        }
        self.validate_bid(&bid)?;
        if self.books[request_id].bids.iter().any(|b| b.bid_id == bid.bid_id) {
            return Err(AggregatorError::Validation(format!("duplicate bid {}", bid.bid_id)));
        }
        let payload = serde_json::to_value(&bid).expect("bid serializes");
        self.step(request_id, EventKind::BidOffer, payload)?;
        self.book_mut(request_id)?.bids.push(bid);
        Ok(())
    }

    fn validate_bid(&self, bid: &Bid) -> Result<(), AggregatorError> {
        if !(bid.price_per_kw >= 0.0 && bid.price_per_kw.is_finite()) {
            return Err(AggregatorError::Validation("bid price must be non-negative".into()));
        }
        if !(bid.offered_kw > 0.0 && bid.offered_kw.is_finite()) {
            return Err(AggregatorError::Validation("offered_kw must be positive".into()));
        }
        let mut capacity = 0.0;
        for id in &bid.resource_ids {
            let r = self
                .resources
                .get(id)
                .ok_or_else(|| AggregatorError::Validation(format!("bid cites unknown resource {id}")))?;
            if !r.controllable {
                return Err(AggregatorError::Validation(format!("resource {id} is not controllable")));
            }
            capacity += r.capacity_kw;
        }
        if bid.offered_kw > capacity + 1e-9 {
            return Err(AggregatorError::Validation(format!(
                "bid {} offers {} kW but its resources total {capacity} kW",
                bid.bid_id, bid.offered_kw
            )));
        }
        Ok(())
    }

    /// Clears the market for `request_id` and closes bidding.
    pub fn clear(&mut self, request_id: &str) -> Result<Clearing, AggregatorError> {
        let book = self.book_mut(request_id)?;
        if book.clearing.is_some() {
            return Err(AggregatorError::State(format!("{request_id} is already cleared")));
        }
        let clearing = clear_market(&book.bids, book.request.quantity_kw).ok_or_else(|| {
            AggregatorError::Unsat(format!("bids on {request_id} cannot cover {} kW", book.request.quantity_kw))
        })?;
        book.clearing = Some(clearing.clone());
        self.workflow.close_bidding(request_id)?;
        Ok(clearing)
    }

    /// CSP over the resources backing the cleared bids.
    pub fn build_instance(&self, request_id: &str) -> Result<CspInstance, AggregatorError> {
        let book = self
            .books
            .get(request_id)
            .ok_or_else(|| AggregatorError::UnknownRequest(request_id.to_owned()))?;
        let clearing = book
            .clearing
            .as_ref()
            .ok_or_else(|| AggregatorError::State(format!("{request_id} has not been cleared")))?;
        let ids: BTreeSet<&String> = book
            .bids
            .iter()
            .filter(|b| clearing.selected.contains(&b.bid_id))
            .flat_map(|b| &b.resource_ids)
            .collect();
        let resources: Vec<FlexResource> = ids.into_iter().map(|id| self.resources[id].clone()).collect();
        build_csp(&book.request, &resources, &self.table)
    }

    /// Builds and solves the instance for a cleared request.
    pub fn plan(&self, request_id: &str) -> Result<Assignment, AggregatorError> {
        let inst = self.build_instance(request_id)?;
        super::solve_csp(&inst)
            .ok_or_else(|| AggregatorError::Unsat(format!("no setpoint assignment satisfies {request_id}")))
    }

    /// Step 3: commits `assignment` as the request's schedule and notifies
    /// every flexible resource. Setpoints take effect at window start.
    pub fn schedule_dr(&mut self, request_id: &str, assignment: Assignment) -> Result<Schedule, AggregatorError> {
        let inst = self.build_instance(request_id)?;
        if !inst.check_assignment(&assignment) {
            return Err(AggregatorError::ContractViolation(format!(
                "assignment does not satisfy the instance for {request_id}"
            )));
        }
        let book = &self.books[request_id];
        if book.request.window.start_ms() < self.now {
            return Err(AggregatorError::Validation(format!(
                "window of {request_id} starts at {} before clock {}",
                book.request.window.start_ms(),
                self.now
            )));
        }
        let clearing = book.clearing.as_ref().expect("instance built from a clearing");
        let schedule = Schedule {
            request_id: request_id.to_owned(),
            delivered_kw: inst.delivered_kw(&assignment),
            assignment,
            window: book.request.window,
            selected_bids: clearing.selected.clone(),
            total_cost: clearing.total_cost,
        };
        let payload = serde_json::to_value(&schedule).expect("schedule serializes");
        self.step(request_id, EventKind::CreateDfScheduling, payload)?;
        let start = schedule.window.start_ms();
        self.book_mut(request_id)?.schedule = Some(schedule.clone());
        if self.now >= start {
            self.advance_clock(self.now)?;
        }
        Ok(schedule)
    }

    /// Step 4: after the window, returns every scheduled resource to its
    /// baseline and notifies the issuer.
    pub fn activation_and_settlement(&mut self, request_id: &str) -> Result<(), AggregatorError> {
        let now = self.now;
        let book = self.book_mut(request_id)?;
        let Some(schedule) = &book.schedule else {
            return Err(AggregatorError::State(format!("{request_id} has no schedule")));
        };
        let window_end = schedule.window.end_ms();
        if now < window_end {
            return Err(AggregatorError::Timing {
                request_id: request_id.to_owned(),
                now,
                window_end,
            });
        }
        let ids: Vec<String> = schedule.assignment.keys().cloned().collect();
        self.step(request_id, EventKind::ActivationSettlement, json!({ "restored": ids }))?;
        for id in ids {
            let baseline = self.resources[&id].baseline_setpoint;
            self.setpoints.insert(id, baseline);
        }
        Ok(())
    }
}
