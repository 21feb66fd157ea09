use std::fmt;

use super::{ControlKind, EdgeId, NodeId, RoadNetwork, VehicleClass};

/// One breached network invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DanglingEndpoint {
        edge: EdgeId,
        node: NodeId,
    },
    NonPositiveLength {
        edge: EdgeId,
    },
    NoLanes {
        edge: EdgeId,
    },
    NonPositiveSpeed {
        edge: EdgeId,
    },
    MissingStationEdge {
        station: usize,
        edge: EdgeId,
    },
    OffsetOutOfRange {
        station: usize,
        edge: EdgeId,
        offset: f64,
        length: f64,
    },
    BadDwell {
        station: usize,
    },
    ClassNotAllowed {
        station: usize,
        edge: EdgeId,
        class: VehicleClass,
    },
    UnknownControlNode {
        node: NodeId,
    },
    BadProbability {
        node: NodeId,
    },
    NonPositiveWait {
        node: NodeId,
    },
    NonPositiveCycle {
        node: NodeId,
    },
    PhasePlanIncomplete {
        node: NodeId,
        approach: EdgeId,
    },
    Disconnected {
        class: VehicleClass,
        edge: EdgeId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingEndpoint { edge, node } => {
                write!(f, "edge {edge} references undefined node {node}")
            }
            Violation::NonPositiveLength { edge } => write!(f, "edge {edge} has length <= 0"),
            Violation::NoLanes { edge } => write!(f, "edge {edge} has no lanes"),
            Violation::NonPositiveSpeed { edge } => write!(f, "edge {edge} has speed limit <= 0"),
            Violation::MissingStationEdge { station, edge } => {
                write!(f, "station {station} references missing edge {edge}")
            }
            Violation::OffsetOutOfRange {
                station,
                edge,
                offset,
                length,
            } => write!(
                f,
                "station {station} offset {offset} outside edge {edge} of length {length}"
            ),
            Violation::BadDwell { station } => {
                write!(f, "station {station} has invalid dwell range")
            }
            Violation::ClassNotAllowed {
                station,
                edge,
                class,
            } => write!(
                f,
                "station {station} serves {class} which edge {edge} forbids"
            ),
            Violation::UnknownControlNode { node } => write!(f, "control on undefined node {node}"),
            Violation::BadProbability { node } => {
                write!(f, "node {node}: stop probability outside [0,1]")
            }
            Violation::NonPositiveWait { node } => {
                write!(f, "node {node}: maximum wait must be > 0")
            }
            Violation::NonPositiveCycle { node } => {
                write!(f, "node {node}: signal cycle must be > 0")
            }
            Violation::PhasePlanIncomplete { node, approach } => {
                write!(f, "node {node}: approach {approach} never gets green")
            }
            Violation::Disconnected { class, edge } => {
                write!(
                    f,
                    "edge {edge} is disconnected from the rest of the {class} network"
                )
            }
        }
    }
}

/// Lists every breached invariant; an empty list means the network is sound.
pub fn validate_network(net: &RoadNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = net.nodes().len();
    let node_ok = |id: NodeId| (id.0 as usize) < n;

    for e in net.edges() {
        for node in [e.from, e.to] {
            if !node_ok(node) {
                out.push(Violation::DanglingEndpoint { edge: e.id, node });
            }
        }
        if !(e.length > 0.0) {
            out.push(Violation::NonPositiveLength { edge: e.id });
        }
        if e.lanes == 0 {
            out.push(Violation::NoLanes { edge: e.id });
        }
        if !(e.speed_limit > 0.0) {
            out.push(Violation::NonPositiveSpeed { edge: e.id });
        }
    }

    for (i, s) in net.stations().iter().enumerate() {
        let Some(edge) = net.edges().get(s.edge.0 as usize) else {
            out.push(Violation::MissingStationEdge {
                station: i,
                edge: s.edge,
            });
            continue;
        };
        if !(s.offset >= 0.0 && s.offset < edge.length) {
            out.push(Violation::OffsetOutOfRange {
                station: i,
                edge: s.edge,
                offset: s.offset,
                length: edge.length,
            });
        }
        if !(s.dwell_min >= 0.0 && s.dwell_min <= s.dwell_max) {
            out.push(Violation::BadDwell { station: i });
        }
        if !edge.allowed.contains(s.serves) {
            out.push(Violation::ClassNotAllowed {
                station: i,
                edge: s.edge,
                class: s.serves,
            });
        }
    }

    for ix in net.intersections() {
        if !node_ok(ix.node) {
            out.push(Violation::UnknownControlNode { node: ix.node });
            continue;
        }
        match &ix.control {
            ControlKind::ProbabilisticSign { p, w } => {
                if !(0.0..=1.0).contains(p) {
                    out.push(Violation::BadProbability { node: ix.node });
                }
                if !(*w > 0.0) {
                    out.push(Violation::NonPositiveWait { node: ix.node });
                }
            }
            ControlKind::TrafficLight(plan) => {
                if !(plan.cycle() > 0.0) {
                    out.push(Violation::NonPositiveCycle { node: ix.node });
                }
                for &a in &ix.approaches {
                    if !plan.phases.iter().any(|p| p.approaches.contains(&a)) {
                        out.push(Violation::PhasePlanIncomplete {
                            node: ix.node,
                            approach: a,
                        });
                    }
                }
            }
            ControlKind::None | ControlKind::StopSign => {}
        }
    }

    // Weak connectivity of each class subgraph, checked only over edges whose
    // endpoints resolve.
    for class in [VehicleClass::Metrobus, VehicleClass::Car] {
        let edges: Vec<_> = net
            .edges()
            .iter()
            .filter(|e| e.allowed.contains(class) && node_ok(e.from) && node_ok(e.to))
            .collect();
        let Some(first) = edges.first() else { continue };
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &edges {
            let (a, b) = (
                find(&mut parent, e.from.0 as usize),
                find(&mut parent, e.to.0 as usize),
            );
            parent[a] = b;
        }
        let root = find(&mut parent, first.from.0 as usize);
        for e in &edges {
            if find(&mut parent, e.from.0 as usize) != root {
                out.push(Violation::Disconnected { class, edge: e.id });
            }
        }
    }
    out
}
