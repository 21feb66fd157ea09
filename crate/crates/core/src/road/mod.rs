//! Road topologies for the hybrid corridor, urban grid and highway models,
//! plus class-aware routing over them.

mod routing;
mod serial;
mod topology;
mod validate;

pub use routing::{route_cost, shortest_route, Route};
pub use serial::{parse_network, write_network};
pub use topology::{build_topology, TopologyParams, UmmControl};
pub use validate::{validate_network, Violation};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RoadError {
    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),
    #[error("no route from node {origin} to node {dest} for {class}")]
    NoRoute {
        origin: NodeId,
        dest: NodeId,
        class: VehicleClass,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("network parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which of the three compared road models a network realises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// Hybrid: restricted metrobus lanes between two one-way main roads.
    Hmm,
    /// Urban grid with controlled intersections.
    Umm,
    /// Straight highway corridor.
    Hwm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Hmm, ModelKind::Umm, ModelKind::Hwm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Hmm => "HMM",
            ModelKind::Umm => "UMM",
            ModelKind::Hwm => "HWM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HMM" => Ok(ModelKind::Hmm),
            "UMM" => Ok(ModelKind::Umm),
            "HWM" => Ok(ModelKind::Hwm),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleClass {
    Metrobus,
    Car,
}

impl VehicleClass {
    /// Physical length used for gap computation.
    pub fn length(self) -> f64 {
        match self {
            VehicleClass::Metrobus => 18.0,
            VehicleClass::Car => 5.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Metrobus => "metrobus",
            VehicleClass::Car => "car",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "metrobus" => Ok(VehicleClass::Metrobus),
            "car" => Ok(VehicleClass::Car),
            other => Err(format!("unknown vehicle class `{other}`")),
        }
    }
}

/// Set of vehicle classes allowed on an edge. Never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassSet {
    Metrobus,
    Car,
    Both,
}

impl ClassSet {
    pub fn contains(self, class: VehicleClass) -> bool {
        matches!(
            (self, class),
            (ClassSet::Both, _)
                | (ClassSet::Metrobus, VehicleClass::Metrobus)
                | (ClassSet::Car, VehicleClass::Car)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassSet::Metrobus => "metrobus",
            ClassSet::Car => "car",
            ClassSet::Both => "both",
        }
    }
}

impl FromStr for ClassSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "metrobus" => Ok(ClassSet::Metrobus),
            "car" => Ok(ClassSet::Car),
            "both" => Ok(ClassSet::Both),
            other => Err(format!("unknown class set `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    /// meters
    pub length: f64,
    pub lanes: u32,
    /// m/s, shared by every lane of the edge
    pub speed_limit: f64,
    /// Stored and serialized; no procedure reads it.
    pub priority: i32,
    pub allowed: ClassSet,
}

impl Edge {
    /// Free-flow traversal time, the routing cost.
    pub fn travel_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

/// One green phase of a signal plan: the approaches released together and
/// how long they stay green.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub approaches: Vec<EdgeId>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub phases: Vec<Phase>,
}

impl PhasePlan {
    pub fn cycle(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlKind {
    None,
    StopSign,
    /// Stop with probability `p`, then wait uniformly in `[0, w]` seconds.
    ProbabilisticSign {
        p: f64,
        w: f64,
    },
    TrafficLight(PhasePlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub node: NodeId,
    pub control: ControlKind,
    /// Incoming edges, ascending by id.
    pub approaches: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopStation {
    pub edge: EdgeId,
    /// meters from the edge start
    pub offset: f64,
    pub dwell_min: f64,
    pub dwell_max: f64,
    pub serves: VehicleClass,
}

/// Immutable road graph. Node and edge ids are dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    kind: ModelKind,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    intersections: Vec<Intersection>,
    stations: Vec<StopStation>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    control_at: Vec<Option<usize>>,
    stations_on: Vec<Vec<usize>>,
}

impl RoadNetwork {
    /// Assembles a network from raw parts without validating it; dangling
    /// references are tolerated here and reported by [`validate_network`].
    pub fn from_parts(
        kind: ModelKind,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        intersections: Vec<Intersection>,
        stations: Vec<StopStation>,
    ) -> Self {
        let n = nodes.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for e in &edges {
            if let Some(list) = out_edges.get_mut(e.from.0 as usize) {
                list.push(e.id);
            }
            if let Some(list) = in_edges.get_mut(e.to.0 as usize) {
                list.push(e.id);
            }
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort();
        }
        let mut control_at = vec![None; n];
        for (i, ix) in intersections.iter().enumerate() {
            if let Some(slot) = control_at.get_mut(ix.node.0 as usize) {
                *slot = Some(i);
            }
        }
        let mut stations_on = vec![Vec::new(); edges.len()];
        for (i, s) in stations.iter().enumerate() {
            if let Some(list) = stations_on.get_mut(s.edge.0 as usize) {
                list.push(i);
            }
        }
        for list in &mut stations_on {
            list.sort_by(|&a, &b| stations[a].offset.total_cmp(&stations[b].offset));
        }
        RoadNetwork {
            kind,
            nodes,
            edges,
            intersections,
            stations,
            out_edges,
            in_edges,
            control_at,
            stations_on,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn stations(&self) -> &[StopStation] {
        &self.stations
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        self.out_edges
            .get(node.0 as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        self.in_edges
            .get(node.0 as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Intersection controlling `node`, if any.
    pub fn control(&self, node: NodeId) -> Option<&Intersection> {
        self.control_at
            .get(node.0 as usize)
            .copied()
            .flatten()
            .map(|i| &self.intersections[i])
    }

    /// Stations on `edge`, ascending by offset.
    pub fn stations_on(&self, edge: EdgeId) -> impl Iterator<Item = &StopStation> {
        self.stations_on
            .get(edge.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.stations[i])
    }

    /// Nodes from which a vehicle of `class` can depart.
    pub fn class_nodes(&self, class: VehicleClass) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        for e in self.edges.iter().filter(|e| e.allowed.contains(class)) {
            for n in [e.from, e.to] {
                if let Some(s) = seen.get_mut(n.0 as usize) {
                    *s = true;
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    pub fn max_speed_limit(&self) -> f64 {
        self.edges.iter().map(|e| e.speed_limit).fold(0.0, f64::max)
    }

    /// Planar point `pos` meters along `edge`, shifted right of the travel
    /// direction into `lane` (lane 0 is the rightmost).
    pub fn lane_point(&self, edge: EdgeId, lane: u32, pos: f64) -> (f64, f64) {
        let e = self.edge(edge);
        let a = self.nodes[e.from.0 as usize];
        let b = self.nodes[e.to.0 as usize];
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let span = (dx * dx + dy * dy).sqrt();
        if span == 0.0 {
            return (a.x, a.y);
        }
        let frac = (pos / e.length).clamp(0.0, 1.0);
        let (ux, uy) = (dx / span, dy / span);
        // right-hand normal of the travel direction
        let (rx, ry) = (uy, -ux);
        let lateral = MEDIAN_OFFSET + (e.lanes - 1 - lane.min(e.lanes - 1)) as f64 * LANE_WIDTH;
        (
            a.x + dx * frac + rx * lateral,
            a.y + dy * frac + ry * lateral,
        )
    }
}

pub(crate) const LANE_WIDTH: f64 = 3.2;
/// Distance from the edge centerline to the innermost lane.
pub(crate) const MEDIAN_OFFSET: f64 = 1.6;

/// Rounds to the 6-decimal grid used by every text format, so that
/// serialization round-trips bit-exactly.
pub(crate) fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
