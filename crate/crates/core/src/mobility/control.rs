use rand::Rng;

use super::MobilityConfig;
use crate::rng::RngStream;
use crate::road::{EdgeId, PhasePlan, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Proceed,
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Turn {
    Left,
    Right,
    Straight,
    UTurn,
}

/// Stop sign: FIFO service, each vehicle holds the line for the stop time
/// once it is at the head of the queue.
pub fn ssm_decision(
    arrived_at_stop: bool,
    wait_elapsed: f64,
    queue_ahead: usize,
    cfg: &MobilityConfig,
) -> Decision {
    if arrived_at_stop && queue_ahead == 0 && wait_elapsed >= cfg.ssm_stop_time - 1e-9 {
        Decision::Proceed
    } else {
        Decision::Wait
    }
}

/// Probabilistic sign: stop with probability `p` for a wait uniform in
/// `[0, w]`, otherwise cross without waiting.
pub fn ptsm_decision(p: f64, w: f64, rng: &mut RngStream) -> f64 {
    let stop = rng.random::<f64>() < p;
    let wait = rng.random::<f64>() * w;
    if stop {
        wait
    } else {
        0.0
    }
}

/// Index of the phase whose half-open green interval contains `t` modulo
/// the cycle.
pub fn tlm_phase(t: f64, plan: &PhasePlan) -> usize {
    let cycle = plan.cycle();
    let mut into = t.rem_euclid(cycle);
    for (i, phase) in plan.phases.iter().enumerate() {
        if into < phase.duration {
            return i;
        }
        into -= phase.duration;
    }
    // only reachable through rounding at the very end of the cycle
    plan.phases.len() - 1
}

const MANHATTAN_WEIGHTS: [(Turn, f64); 3] = [
    (Turn::Left, 0.25),
    (Turn::Right, 0.25),
    (Turn::Straight, 0.5),
];

/// Manhattan turning with every option available.
pub fn manhattan_turn(rng: &mut RngStream) -> Turn {
    manhattan_turn_among(&[Turn::Left, Turn::Right, Turn::Straight], rng)
        .expect("all options available")
}

/// Manhattan turning restricted to `available`, weights renormalised.
/// `None` when no left, right or straight option exists.
pub fn manhattan_turn_among(available: &[Turn], rng: &mut RngStream) -> Option<Turn> {
    let options: Vec<(Turn, f64)> = MANHATTAN_WEIGHTS
        .iter()
        .copied()
        .filter(|(t, _)| available.contains(t))
        .collect();
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    if options.is_empty() {
        return None;
    }
    let mut draw = rng.random::<f64>() * total;
    for &(turn, w) in &options {
        if draw < w {
            return Some(turn);
        }
        draw -= w;
    }
    options.last().map(|(t, _)| *t)
}

/// Turn made when driving from `from` onto `to` through their shared node.
pub fn classify_turn(net: &RoadNetwork, from: EdgeId, to: EdgeId) -> Turn {
    let (a, b) = (net.edge(from), net.edge(to));
    if b.to == a.from {
        return Turn::UTurn;
    }
    let dir = |e: &crate::road::Edge| {
        let (p, q) = (net.node(e.from).unwrap(), net.node(e.to).unwrap());
        (q.x - p.x, q.y - p.y)
    };
    let (ax, ay) = dir(a);
    let (bx, by) = dir(b);
    let angle = (ax * by - ay * bx).atan2(ax * bx + ay * by).to_degrees();
    if angle.abs() <= 45.0 {
        Turn::Straight
    } else if angle.abs() >= 135.0 {
        Turn::UTurn
    } else if angle > 0.0 {
        Turn::Left
    } else {
        Turn::Right
    }
}
