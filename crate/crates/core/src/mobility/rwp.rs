use rand::Rng;

use super::{MobilityConfig, MobilityError, MobilityTrace, TraceRecord, VehicleId};
use crate::rng::{self, RngStream};
use crate::road::quantize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn contains(&self, p: Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub target: Point,
    pub speed: f64,
    pub pause: f64,
}

fn uniform(lo: f64, hi: f64, rng: &mut RngStream) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws the next leg: a destination uniform over `area`, a speed uniform in
/// `[rwp_speed_min, rwp_speed_max]` and the configured pause on arrival.
pub fn rwp_next(
    _current: Point,
    area: &Bounds,
    cfg: &MobilityConfig,
    rng: &mut RngStream,
) -> Waypoint {
    let target = Point {
        x: uniform(area.min.x, area.max.x, rng),
        y: uniform(area.min.y, area.max.y, rng),
    };
    Waypoint {
        target,
        speed: uniform(cfg.rwp_speed_min, cfg.rwp_speed_max, rng),
        pause: cfg.rwp_pause,
    }
}

/// Free-space random waypoint motion for `cfg.vehicle_count` nodes placed
/// uniformly in `area`.
pub fn run_random_waypoint(
    area: &Bounds,
    cfg: &MobilityConfig,
) -> Result<MobilityTrace, MobilityError> {
    cfg.check()?;
    if !(area.min.x <= area.max.x && area.min.y <= area.max.y) {
        return Err(MobilityError::InvalidConfig(
            "area bounds are inverted".into(),
        ));
    }
    struct Node {
        pos: Point,
        leg: Waypoint,
        paused_until: f64,
        speed: f64,
        rng: RngStream,
    }
    let mut nodes: Vec<Node> = (0..cfg.vehicle_count)
        .map(|id| {
            let mut rng = rng::stream(cfg.seed, rng::domain::WAYPOINT, id as u64);
            let pos = Point {
                x: uniform(area.min.x, area.max.x, &mut rng),
                y: uniform(area.min.y, area.max.y, &mut rng),
            };
            let leg = rwp_next(pos, area, cfg, &mut rng);
            Node {
                pos,
                leg,
                paused_until: 0.0,
                speed: 0.0,
                rng,
            }
        })
        .collect();

    let samples = cfg.sample_count();
    let mut records = Vec::with_capacity(samples * nodes.len());
    let emit = |time: f64, nodes: &[Node], records: &mut Vec<TraceRecord>| {
        for (id, n) in nodes.iter().enumerate() {
            records.push(TraceRecord {
                time,
                vehicle: VehicleId(id as u32),
                x: quantize(n.pos.x),
                y: quantize(n.pos.y),
                speed: quantize(n.speed),
            });
        }
    };
    emit(0.0, &nodes, &mut records);
    for k in 0..samples.saturating_sub(1) {
        let t = k as f64 * cfg.dt;
        for n in &mut nodes {
            if t + 1e-9 < n.paused_until {
                n.speed = 0.0;
                continue;
            }
            let reach = n.leg.speed * cfg.dt;
            let dist = n.pos.distance(n.leg.target);
            if dist <= reach {
                n.pos = n.leg.target;
                n.speed = if cfg.dt > 0.0 { dist / cfg.dt } else { 0.0 };
                n.paused_until = t + cfg.dt + n.leg.pause;
                n.leg = rwp_next(n.pos, area, cfg, &mut n.rng);
            } else {
                let f = reach / dist;
                n.pos.x += (n.leg.target.x - n.pos.x) * f;
                n.pos.y += (n.leg.target.y - n.pos.y) * f;
                n.speed = n.leg.speed;
            }
        }
        emit(quantize((k + 1) as f64 * cfg.dt), &nodes, &mut records);
    }

    Ok(MobilityTrace {
        records,
        config_echo: cfg.clone(),
        network_kind: None,
        lane_samples: Vec::new(),
        crossings: Vec::new(),
    })
}
