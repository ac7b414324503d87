//! dFASC: flexibility market clearing and DR scheduling.
//!
//! Resources are CSP variables whose domains are setpoint actions; a request
//! becomes unary domain restrictions plus one high-order quantity
//! constraint. [`Dfasc`] drives the four workflow steps against the ledger.

mod clearing;
mod csp;
mod dfasc;
mod model;
mod solver;

use thiserror::Error;

pub use clearing::{clear_market, Clearing, EXACT_CLEARING_LIMIT};
pub use csp::{build_csp, islanding_action, Assignment, Constraint, CspInstance, DomainTable, PredicateFn, Relation};
pub use dfasc::{Dfasc, RequestBook};
pub use model::{
    Action, Bid, Direction, FlexRequest, FlexResource, ResourceKind, Schedule, Service, SetpointAction, Shape,
    Window, STEP_MS,
};
pub use solver::{solve_csp, solve_values};

use crate::identity::IdentityError;
use crate::ledger::LedgerError;
use crate::workflow::WorkflowError;
use crate::SimTime;

#[derive(Debug, Error)]
pub enum AggregatorError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("unsat: {0}")]
    Unsat(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("request {request_id} window ends at {window_end}, clock is {now}")]
    Timing {
        request_id: String,
        now: SimTime,
        window_end: SimTime,
    },
    #[error("state: {0}")]
    State(String),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error(transparent)]
    Workflow(WorkflowError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

impl From<WorkflowError> for AggregatorError {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::IllegalTransition { .. } | WorkflowError::BiddingClosed(_) | WorkflowError::OutOfOrder { .. } => {
                AggregatorError::State(e.to_string())
            }
            WorkflowError::Ledger(l) => AggregatorError::Ledger(l),
            other => AggregatorError::Workflow(other),
        }
    }
}
