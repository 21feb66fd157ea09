//! Fixed-step microscopic mobility: Krauss car following, intersection
//! control (stop sign, probabilistic sign, traffic light), station dwell and
//! free-space random waypoint motion.

mod control;
mod engine;
mod krauss;
mod rwp;
mod trace_io;

pub use control::{
    classify_turn, manhattan_turn, manhattan_turn_among, ptsm_decision, ssm_decision, tlm_phase,
    Decision, Turn,
};
pub use engine::{run_mobility, Crossing};
pub use krauss::{next_speed, safe_speed, step_vehicle, Obstacle, ObstacleKind, StepOutcome};
pub use rwp::{run_random_waypoint, rwp_next, Bounds, Point, Waypoint};
pub use trace_io::{export_trace, parse_trace, TraceFormat};

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::road::{EdgeId, ModelKind, RoadError, VehicleClass};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("invalid mobility config: {0}")]
    InvalidConfig(String),
    #[error("vehicle {0} ran past the end of its route")]
    RouteExhausted(VehicleId),
    #[error("could not place vehicle {0} without overlapping another")]
    Placement(VehicleId),
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error("trace parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How vehicles pick their next edges on the urban grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteChoice {
    /// Free-flow shortest routes between random endpoints.
    Shortest,
    /// Probabilistic turning at every grid node.
    Manhattan,
}

impl FromStr for RouteChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shortest" => Ok(RouteChoice::Shortest),
            "manhattan" => Ok(RouteChoice::Manhattan),
            other => Err(format!("unknown route choice `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    /// step length, seconds
    pub dt: f64,
    pub accel: f64,
    pub decel: f64,
    /// driver reaction time
    pub tau: f64,
    /// dawdling factor
    pub sigma: f64,
    pub min_gap: f64,
    pub rwp_pause: f64,
    pub rwp_speed_min: f64,
    pub rwp_speed_max: f64,
    pub ssm_stop_time: f64,
    pub duration: f64,
    pub vehicle_count: u32,
    pub seed: u64,
    /// Share of hybrid-model vehicles that are metrobuses.
    pub metrobus_fraction: f64,
    pub route_choice: RouteChoice,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            dt: 1.0,
            accel: 2.6,
            decel: 4.5,
            tau: 1.0,
            sigma: 0.5,
            min_gap: 2.5,
            rwp_pause: 0.0,
            rwp_speed_min: 0.0,
            rwp_speed_max: 20.0,
            ssm_stop_time: 2.0,
            duration: 1000.0,
            vehicle_count: 160,
            seed: 1,
            metrobus_fraction: 0.1,
            route_choice: RouteChoice::Shortest,
        }
    }
}

impl MobilityConfig {
    pub fn check(&self) -> Result<(), MobilityError> {
        let fail = |m: &str| Err(MobilityError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0) {
            return fail("dt must be positive");
        }
        if !(self.accel > 0.0 && self.decel > 0.0) {
            return fail("accel and decel must be positive");
        }
        if !(self.tau >= self.dt) {
            return fail("tau must be at least dt");
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return fail("sigma must lie in [0, 1]");
        }
        if !(self.min_gap >= 0.0) {
            return fail("min_gap must be non-negative");
        }
        if !(self.rwp_speed_min >= 0.0 && self.rwp_speed_min <= self.rwp_speed_max) {
            return fail("need 0 <= rwp_speed_min <= rwp_speed_max");
        }
        if !(self.rwp_pause >= 0.0 && self.ssm_stop_time >= 0.0) {
            return fail("pause and stop times must be non-negative");
        }
        if !(self.duration >= 0.0) {
            return fail("duration must be non-negative");
        }
        if self.vehicle_count == 0 {
            return fail("vehicle_count must be positive");
        }
        if !(0.0..=1.0).contains(&self.metrobus_fraction) {
            return fail("metrobus_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Number of recorded samples, `t = 0, dt, ..., duration`.
    pub fn sample_count(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Driving,
    QueuedAtControl { since: f64 },
    DwellingAtStation { until: f64 },
    Paused { until: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub edge: EdgeId,
    pub lane: u32,
    /// front bumper, meters from the edge start
    pub pos: f64,
    pub speed: f64,
    /// Edges still to drive after the current one.
    pub route: VecDeque<EdgeId>,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub vehicle: VehicleId,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// Lane-level position of a vehicle at a sample time. Kept alongside the
/// planar records for safety audits; not part of any export format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneSample {
    pub time: f64,
    pub vehicle: VehicleId,
    pub class: VehicleClass,
    pub edge: EdgeId,
    pub lane: u32,
    pub pos: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    /// Sorted by `(time, vehicle)`.
    pub records: Vec<TraceRecord>,
    pub config_echo: MobilityConfig,
    /// `None` for free-space traces and traces parsed from text.
    pub network_kind: Option<ModelKind>,
    pub lane_samples: Vec<LaneSample>,
    pub crossings: Vec<Crossing>,
}

impl MobilityTrace {
    pub fn vehicles(&self) -> Vec<VehicleId> {
        let mut ids: Vec<VehicleId> = self.records.iter().map(|r| r.vehicle).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn start_time(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.time)
    }

    pub fn end_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }
}
