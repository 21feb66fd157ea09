use rand::Rng;

use super::{MobilityConfig, MobilityError, VehicleState};
use crate::rng::RngStream;
use crate::road::RoadNetwork;

/// Vehicles within this distance of a stop point they are braking for are
/// placed on it.
const STOP_SNAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleKind {
    Vehicle,
    /// Stationary point the vehicle must not pass but need not stop on.
    Barrier,
    /// Stop line or station at offset `at` on the edge `ahead` route edges
    /// past the current one.
    StopPoint {
        ahead: usize,
        at: f64,
    },
}

/// Nearest constraint ahead of a vehicle. `gap` is the usable distance:
/// for vehicles it is already net of the leader's length and `min_gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub gap: f64,
    pub speed: f64,
    pub kind: ObstacleKind,
}

impl Obstacle {
    /// `bumper_gap` is leader rear minus follower front.
    pub fn vehicle(bumper_gap: f64, leader_speed: f64, cfg: &MobilityConfig) -> Self {
        Obstacle {
            gap: bumper_gap - cfg.min_gap,
            speed: leader_speed,
            kind: ObstacleKind::Vehicle,
        }
    }

    pub fn barrier(distance: f64) -> Self {
        Obstacle {
            gap: distance,
            speed: 0.0,
            kind: ObstacleKind::Barrier,
        }
    }

    pub fn stop_point(distance: f64, ahead: usize, at: f64) -> Self {
        Obstacle {
            gap: distance,
            speed: 0.0,
            kind: ObstacleKind::StopPoint { ahead, at },
        }
    }

    /// Highest speed this obstacle allows a follower currently at
    /// `follower_speed`.
    pub fn speed_cap(&self, follower_speed: f64, cfg: &MobilityConfig) -> f64 {
        let gap = self.gap.max(0.0);
        safe_speed(self.speed, gap, follower_speed, cfg).min(gap / cfg.dt)
    }
}

/// Krauss safe speed: the fastest speed from which the follower can still
/// stop behind a leader that starts braking at `decel` after one reaction
/// time.
pub fn safe_speed(leader_speed: f64, gap: f64, follower_speed: f64, cfg: &MobilityConfig) -> f64 {
    let v = leader_speed
        + (gap - leader_speed * cfg.tau)
            / (cfg.tau + (follower_speed + leader_speed) / (2.0 * cfg.decel));
    v.max(0.0)
}

/// Krauss update with dawdling draw `u` in `[0, 1)`.
pub fn next_speed(
    speed: f64,
    ahead: Option<&Obstacle>,
    speed_limit: f64,
    cfg: &MobilityConfig,
    u: f64,
) -> f64 {
    let mut desired = (speed + cfg.accel * cfg.dt).min(speed_limit);
    if let Some(o) = ahead {
        desired = desired.min(safe_speed(o.speed, o.gap.max(0.0), speed, cfg));
    }
    let mut v = (desired - cfg.sigma * cfg.accel * cfg.dt * u).max(0.0);
    if let Some(o) = ahead {
        // never close more than the available gap within one step
        v = v.min(o.gap.max(0.0) / cfg.dt);
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: VehicleState,
    /// The vehicle came to rest on the stop point it was braking for.
    pub arrived_at_stop: bool,
    /// Edges left during the step, in order.
    pub left_edges: Vec<crate::road::EdgeId>,
}

/// Advances one vehicle by one step along its route. `ahead` is the binding
/// obstacle.
pub fn step_vehicle(
    v: &VehicleState,
    ahead: Option<Obstacle>,
    net: &RoadNetwork,
    cfg: &MobilityConfig,
    rng: &mut RngStream,
) -> Result<StepOutcome, MobilityError> {
    let edge = net.edge(v.edge);
    let u: f64 = rng.random();
    let mut speed = next_speed(v.speed, ahead.as_ref(), edge.speed_limit, cfg, u);

    // honour the limits of edges entered during this step
    let mut reach = v.pos + speed * cfg.dt - edge.length;
    let mut upcoming = v.route.iter();
    while reach > 0.0 {
        let Some(&next) = upcoming.next() else { break };
        let e = net.edge(next);
        speed = speed.min(e.speed_limit);
        reach -= e.length;
    }

    let mut next = v.clone();
    let mut arrived = false;
    let mut left = Vec::new();
    match ahead {
        Some(Obstacle {
            gap,
            kind: ObstacleKind::StopPoint { ahead, at },
            ..
        }) if gap - speed * cfg.dt <= STOP_SNAP => {
            for _ in 0..ahead {
                let Some(e) = next.route.pop_front() else {
                    return Err(MobilityError::RouteExhausted(v.id));
                };
                left.push(next.edge);
                next.edge = e;
                next.lane = next.lane.min(net.edge(e).lanes - 1);
            }
            next.pos = at;
            next.speed = 0.0;
            arrived = true;
        }
        _ => {
            next.pos += speed * cfg.dt;
            next.speed = speed;
        }
    }

    loop {
        let len = net.edge(next.edge).length;
        if next.pos <= len {
            break;
        }
        let Some(e) = next.route.pop_front() else {
            return Err(MobilityError::RouteExhausted(v.id));
        };
        next.pos -= len;
        left.push(next.edge);
        next.edge = e;
        next.lane = next.lane.min(net.edge(e).lanes - 1);
    }
    Ok(StepOutcome {
        state: next,
        arrived_at_stop: arrived,
        left_edges: left,
    })
}
