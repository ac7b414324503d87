//! Flexible resources, setpoints and market objects.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::AggregatorError;
use crate::SimTime;

/// Length of one scheduling step (30 minutes) in simulated milliseconds.
pub const STEP_MS: SimTime = 30 * 60 * 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResourceKind {
    /// Distributed generation (rooftop PV, wind).
    Dg,
    /// Hot water.
    Hw,
    Hvac,
    /// Energy storage.
    Ess,
}

impl ResourceKind {
    pub fn is_load(self) -> bool {
        matches!(self, ResourceKind::Hw | ResourceKind::Hvac)
    }

    /// Every action a resource of this kind can physically take.
    pub fn legal_actions(self) -> &'static [Action] {
        match self {
            ResourceKind::Dg => &[Action::OutputMax, Action::On, Action::Idle],
            ResourceKind::Hw | ResourceKind::Hvac => &[Action::Off, Action::On, Action::Idle],
            ResourceKind::Ess => &[Action::Discharge, Action::Charge, Action::Idle],
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceKind::Dg => "DG",
            ResourceKind::Hw => "HW",
            ResourceKind::Hvac => "HVAC",
            ResourceKind::Ess => "ESS",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    OutputMax,
    Off,
    Discharge,
    Charge,
    On,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetpointAction {
    pub action: Action,
    pub level_kw: f64,
}

impl SetpointAction {
    pub fn new(action: Action, level_kw: f64) -> Self {
        SetpointAction { action, level_kw }
    }

    pub fn validate(&self, kind: ResourceKind, capacity_kw: f64) -> Result<(), AggregatorError> {
        if !kind.legal_actions().contains(&self.action) {
            return Err(AggregatorError::Validation(format!(
                "{:?} is not a legal action for {kind}",
                self.action
            )));
        }
        if !self.level_kw.is_finite() || self.level_kw < 0.0 || self.level_kw > capacity_kw + 1e-9 {
            return Err(AggregatorError::Validation(format!(
                "level {} kW outside [0, {capacity_kw}]",
                self.level_kw
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexResource {
    pub resource_id: String,
    pub kind: ResourceKind,
    pub controllable: bool,
    pub capacity_kw: f64,
    pub baseline_setpoint: SetpointAction,
    pub owner: String,
}

impl FlexResource {
    pub fn validate(&self) -> Result<(), AggregatorError> {
        if !(self.capacity_kw > 0.0 && self.capacity_kw.is_finite()) {
            return Err(AggregatorError::Validation(format!(
                "resource {} capacity must be positive",
                self.resource_id
            )));
        }
        self.baseline_setpoint.validate(self.kind, self.capacity_kw)
    }

    /// kW a load draws at baseline; zero for generators, storage and idle loads.
    pub fn baseline_consumption_kw(&self) -> f64 {
        if self.kind.is_load() && self.baseline_setpoint.action == Action::On {
            self.baseline_setpoint.level_kw
        } else {
            0.0
        }
    }

    /// The concrete setpoint used when this resource is asked to take `action`.
    pub fn setpoint_for(&self, action: Action) -> SetpointAction {
        let level = match action {
            Action::OutputMax | Action::Discharge | Action::Charge => self.capacity_kw,
            Action::On if self.baseline_setpoint.action == Action::On => self.baseline_setpoint.level_kw,
            Action::On => self.capacity_kw,
            Action::Off | Action::Idle => 0.0,
        };
        SetpointAction::new(action, level)
    }

    /// Flexibility delivered by moving this resource to `setpoint`.
    ///
    /// Generation and discharge count their output level, switching a load
    /// off counts its baseline consumption, charging counts negative.
    pub fn delivered_kw(&self, setpoint: &SetpointAction) -> f64 {
        match setpoint.action {
            Action::OutputMax | Action::Discharge => setpoint.level_kw,
            Action::Off if self.kind.is_load() => self.baseline_consumption_kw(),
            Action::Charge => -setpoint.level_kw,
            _ => 0.0,
        }
    }
}

/// A request window in 30-minute steps from the simulation epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub duration: u64,
}

impl Window {
    pub fn start_ms(&self) -> SimTime {
        self.start * STEP_MS
    }

    pub fn end_ms(&self) -> SimTime {
        (self.start + self.duration) * STEP_MS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Shed,
    Shift,
    Shape,
    Shimmy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    IncreaseSupply,
    DecreaseDemand,
}

/// Which domain template turns a request into setpoint restrictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    /// Every generator to full output, every load off, every store discharging.
    #[default]
    ControlIslanding,
    /// Per-kind action table looked up by the request shape.
    ShapeTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexRequest {
    pub request_id: String,
    pub window: Window,
    pub shape: Shape,
    pub quantity_kw: f64,
    pub direction: Direction,
    pub incentive_per_kw: f64,
    pub issuer: String,
    #[serde(default)]
    pub service: Service,
}

impl FlexRequest {
    pub fn validate(&self) -> Result<(), AggregatorError> {
        if !(self.quantity_kw > 0.0 && self.quantity_kw.is_finite()) {
            return Err(AggregatorError::Validation("quantity_kw must be positive".into()));
        }
        if self.window.duration < 1 {
            return Err(AggregatorError::Validation("window must span at least one step".into()));
        }
        if self.incentive_per_kw < 0.0 {
            return Err(AggregatorError::Validation("incentive must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub bid_id: String,
    pub prosumer: String,
    pub offered_kw: f64,
    pub price_per_kw: f64,
    pub resource_ids: Vec<String>,
}

impl Bid {
    pub fn cost(&self) -> f64 {
        self.price_per_kw * self.offered_kw
    }
}

/// Result of a cleared request: setpoints, window and accepted bids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub request_id: String,
    pub assignment: super::Assignment,
    pub window: Window,
    pub selected_bids: Vec<String>,
    pub total_cost: f64,
    pub delivered_kw: f64,
}
