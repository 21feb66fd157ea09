use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{EdgeId, NodeId, RoadError, RoadNetwork, VehicleClass};

pub type Route = Vec<EdgeId>;

#[derive(Copy, Clone, PartialEq)]
struct State {
    cost: f64,
    node: NodeId,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum of free-flow travel times along `route`.
pub fn route_cost(net: &RoadNetwork, route: &[EdgeId]) -> f64 {
    route.iter().map(|&e| net.edge(e).travel_time()).sum()
}

fn tight(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0)
}

/// Minimum free-flow-time route for `class`. Among equal-cost routes the
/// lexicographically smallest edge-id sequence wins.
pub fn shortest_route(
    net: &RoadNetwork,
    origin: NodeId,
    dest: NodeId,
    class: VehicleClass,
) -> Result<Route, RoadError> {
    let n = net.nodes().len();
    for id in [origin, dest] {
        if id.0 as usize >= n {
            return Err(RoadError::UnknownNode(id));
        }
    }

    // Costs-to-go from every node, by Dijkstra on the reversed class subgraph.
    let mut to_go = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    to_go[dest.0 as usize] = 0.0;
    heap.push(State {
        cost: 0.0,
        node: dest,
    });
    while let Some(State { cost, node }) = heap.pop() {
        if cost > to_go[node.0 as usize] {
            continue;
        }
        for &eid in net.in_edges(node) {
            let e = net.edge(eid);
            if !e.allowed.contains(class) {
                continue;
            }
            let next = cost + e.travel_time();
            let slot = &mut to_go[e.from.0 as usize];
            if next < *slot {
                *slot = next;
                heap.push(State {
                    cost: next,
                    node: e.from,
                });
            }
        }
    }

    if !to_go[origin.0 as usize].is_finite() {
        return Err(RoadError::NoRoute {
            origin,
            dest,
            class,
        });
    }

    // Walk forward along tight edges, always taking the smallest edge id.
    let mut route = Vec::new();
    let mut at = origin;
    while at != dest {
        let here = to_go[at.0 as usize];
        let step = net
            .out_edges(at)
            .iter()
            .map(|&id| net.edge(id))
            .filter(|e| e.allowed.contains(class))
            .find(|e| tight(here, e.travel_time() + to_go[e.to.0 as usize]))
            .expect("a finite cost-to-go has a tight outgoing edge");
        route.push(step.id);
        at = step.to;
    }
    Ok(route)
}
