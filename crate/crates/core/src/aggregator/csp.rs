//! Constraint model `(V, E, C)` over flexible resources.
//!
//! Variables are resources, each domain is an ordered list of setpoints, and
//! each constraint pairs a scope (any arity) with an admissibility relation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{Action, FlexRequest, FlexResource, ResourceKind, Service, SetpointAction, Shape};
use super::AggregatorError;

pub type PredicateFn = dyn Fn(&[SetpointAction]) -> bool + Send + Sync;

#[derive(Clone)]
pub enum Relation {
    /// Joint values must match one listed tuple.
    Allowed(Vec<Vec<SetpointAction>>),
    /// Joint values must match no listed tuple.
    Forbidden(Vec<Vec<SetpointAction>>),
    /// Delivered flexibility summed over the scope is at least this many kW.
    AtLeastKw(f64),
    /// Delivered flexibility summed over the scope is at most this many kW.
    AtMostKw(f64),
    Predicate(Arc<PredicateFn>),
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Allowed(t) => write!(f, "Allowed({} tuples)", t.len()),
            Relation::Forbidden(t) => write!(f, "Forbidden({} tuples)", t.len()),
            Relation::AtLeastKw(q) => write!(f, "AtLeastKw({q})"),
            Relation::AtMostKw(q) => write!(f, "AtMostKw({q})"),
            Relation::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    /// Variable indices into [`CspInstance::variables`].
    pub scope: Vec<usize>,
    pub relation: Relation,
}

impl Constraint {
    pub fn new(scope: Vec<usize>, relation: Relation) -> Self {
        Constraint { scope, relation }
    }

    /// Evaluates the relation on a full tuple of scope values.
    pub fn holds(&self, resources: &[FlexResource], values: &[SetpointAction]) -> bool {
        debug_assert_eq!(values.len(), self.scope.len());
        match &self.relation {
            Relation::Allowed(tuples) => tuples.iter().any(|t| t.as_slice() == values),
            Relation::Forbidden(tuples) => !tuples.iter().any(|t| t.as_slice() == values),
            Relation::AtLeastKw(q) => self.delivered(resources, values) + 1e-9 >= *q,
            Relation::AtMostKw(q) => self.delivered(resources, values) <= *q + 1e-9,
            Relation::Predicate(p) => p(values),
        }
    }

    fn delivered(&self, resources: &[FlexResource], values: &[SetpointAction]) -> f64 {
        self.scope
            .iter()
            .zip(values)
            .map(|(&v, sp)| resources[v].delivered_kw(sp))
            .sum()
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }
}

#[derive(Clone, Debug, Default)]
pub struct CspInstance {
    pub variables: Vec<FlexResource>,
    pub domains: Vec<Vec<SetpointAction>>,
    pub constraints: Vec<Constraint>,
}

/// A total map from resource id to setpoint.
pub type Assignment = BTreeMap<String, SetpointAction>;

impl CspInstance {
    pub fn validate(&self) -> Result<(), AggregatorError> {
        if self.domains.len() != self.variables.len() {
            return Err(AggregatorError::Validation("one domain per variable required".into()));
        }
        for c in &self.constraints {
            if let Some(&v) = c.scope.iter().find(|&&v| v >= self.variables.len()) {
                return Err(AggregatorError::Validation(format!(
                    "constraint scope references variable {v} outside V"
                )));
            }
        }
        Ok(())
    }

    /// Checks a value-per-variable tuple against every constraint.
    pub fn satisfied_by(&self, values: &[SetpointAction]) -> bool {
        values.len() == self.variables.len()
            && self.constraints.iter().all(|c| {
                let tuple: Vec<SetpointAction> = c.scope.iter().map(|&v| values[v]).collect();
                c.holds(&self.variables, &tuple)
            })
    }

    /// True when `assignment` is total, draws every value from its domain,
    /// and violates no constraint.
    pub fn check_assignment(&self, assignment: &Assignment) -> bool {
        if assignment.len() != self.variables.len() {
            return false;
        }
        let mut values = Vec::with_capacity(self.variables.len());
        for (var, domain) in self.variables.iter().zip(&self.domains) {
            match assignment.get(&var.resource_id) {
                Some(sp) if domain.contains(sp) => values.push(*sp),
                _ => return false,
            }
        }
        self.satisfied_by(&values)
    }

    pub fn assignment_from(&self, values: &[SetpointAction]) -> Assignment {
        self.variables
            .iter()
            .zip(values)
            .map(|(r, sp)| (r.resource_id.clone(), *sp))
            .collect()
    }

    /// Sum of delivered kW under `assignment`.
    pub fn delivered_kw(&self, assignment: &Assignment) -> f64 {
        self.variables
            .iter()
            .filter_map(|r| assignment.get(&r.resource_id).map(|sp| r.delivered_kw(sp)))
            .sum()
    }
}

/// Per-shape, per-kind allowed actions for requests that do not use the
/// control-islanding template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainTable {
    pub shapes: BTreeMap<Shape, BTreeMap<ResourceKind, Vec<Action>>>,
}

impl Default for DomainTable {
    fn default() -> Self {
        use Action::*;
        use ResourceKind::*;
        let table = |dg: &[Action], hw: &[Action], hvac: &[Action], ess: &[Action]| {
            BTreeMap::from([(Dg, dg.to_vec()), (Hw, hw.to_vec()), (Hvac, hvac.to_vec()), (Ess, ess.to_vec())])
        };
        DomainTable {
            shapes: BTreeMap::from([
                (Shape::Shed, table(&[Idle, On], &[Off, On], &[Off, On], &[Idle, Discharge])),
                (Shape::Shift, table(&[Idle, On], &[Off, On], &[Off, On], &[Charge, Idle, Discharge])),
                (Shape::Shape, table(&[OutputMax, On, Idle], &[On, Off], &[On, Off], &[Discharge, Charge, Idle])),
                (Shape::Shimmy, table(&[OutputMax, Idle], &[Off, On], &[Off, On], &[Discharge, Charge])),
            ]),
        }
    }
}

/// The control-islanding action for a resource kind.
pub fn islanding_action(kind: ResourceKind) -> Action {
    match kind {
        ResourceKind::Dg => Action::OutputMax,
        ResourceKind::Hw | ResourceKind::Hvac => Action::Off,
        ResourceKind::Ess => Action::Discharge,
    }
}

/// Builds the scheduling CSP for `req` over `resources`.
///
/// Domains hold every physically legal setpoint of each resource; the
/// request template contributes one unary restriction per variable, and a
/// single quantity constraint over all variables demands `Σ delivered ≥ q`.
/// Variables are ordered by resource id.
pub fn build_csp(
    req: &FlexRequest,
    resources: &[FlexResource],
    table: &DomainTable,
) -> Result<CspInstance, AggregatorError> {
    let mut variables = resources.to_vec();
    variables.sort_by(|a, b| a.resource_id.cmp(&b.resource_id));
    for r in &variables {
        if !r.controllable {
            return Err(AggregatorError::Validation(format!(
                "resource {} is not controllable",
                r.resource_id
            )));
        }
        r.validate()?;
    }
    let mut constraints = Vec::with_capacity(variables.len() + 1);
    let mut domains = Vec::with_capacity(variables.len());
    for (i, r) in variables.iter().enumerate() {
        let allowed: Vec<Action> = match req.service {
            Service::ControlIslanding => vec![islanding_action(r.kind)],
            Service::ShapeTable => table
                .shapes
                .get(&req.shape)
                .and_then(|t| t.get(&r.kind))
                .cloned()
                .unwrap_or_default(),
        };
        // Preferred actions first so value ordering follows the template.
        let mut legal: Vec<Action> = allowed.clone();
        legal.extend(r.kind.legal_actions().iter().filter(|a| !allowed.contains(a)));
        domains.push(legal.iter().map(|&a| r.setpoint_for(a)).collect());
        let tuples = allowed.iter().map(|&a| vec![r.setpoint_for(a)]).collect();
        constraints.push(Constraint::new(vec![i], Relation::Allowed(tuples)));
    }
    constraints.push(Constraint::new(
        (0..variables.len()).collect(),
        Relation::AtLeastKw(req.quantity_kw),
    ));
    Ok(CspInstance {
        variables,
        domains,
        constraints,
    })
}
