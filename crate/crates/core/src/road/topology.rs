use std::str::FromStr;

use super::{
    quantize, ClassSet, ControlKind, Edge, EdgeId, Intersection, ModelKind, Node, NodeId, Phase,
    PhasePlan, RoadError, RoadNetwork, StopStation, VehicleClass,
};

/// Intersection control used on the urban grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmmControl {
    TrafficLight,
    StopSign,
    Probabilistic,
    /// Checkerboard of traffic lights and stop signs.
    Mixed,
}

impl FromStr for UmmControl {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tlm" | "traffic_light" => Ok(UmmControl::TrafficLight),
            "ssm" | "stop_sign" => Ok(UmmControl::StopSign),
            "ptsm" | "probabilistic" => Ok(UmmControl::Probabilistic),
            "mixed" => Ok(UmmControl::Mixed),
            other => Err(format!("unknown intersection control `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub corridor_length: f64,
    pub corridor_width: f64,
    pub metrobus_lanes_per_direction: u32,
    pub metrobus_speed: f64,
    /// One metrobus edge per direction when true, a single eastbound edge otherwise.
    pub metrobus_bidirectional: bool,
    pub main_road_lanes_per_direction: u32,
    pub main_road_speed: f64,
    /// Lateral distance between the metrobus centerline and each main road.
    pub main_road_offset: f64,
    pub hwm_lanes: u32,
    pub hwm_speed: f64,
    pub umm_lanes: u32,
    pub umm_speed: f64,
    pub metrobus_stations: u32,
    pub main_road_stops: u32,
    pub hwm_stops: u32,
    pub umm_stops: u32,
    pub umm_grid_rows: u32,
    pub umm_grid_cols: u32,
    /// Spacing between parallel avenues of the urban grid.
    pub umm_row_spacing: f64,
    pub umm_control: UmmControl,
    pub tlm_green: f64,
    pub ptsm_p: f64,
    pub ptsm_w: f64,
    pub metrobus_dwell: (f64, f64),
    pub stop_dwell: (f64, f64),
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            corridor_length: 6380.0,
            corridor_width: 1934.0,
            metrobus_lanes_per_direction: 1,
            metrobus_speed: 33.33,
            metrobus_bidirectional: true,
            main_road_lanes_per_direction: 3,
            main_road_speed: 13.89,
            main_road_offset: 15.0,
            hwm_lanes: 4,
            hwm_speed: 33.3,
            umm_lanes: 4,
            umm_speed: 13.89,
            metrobus_stations: 5,
            // ranged values take their midpoint: 10-15, 0-5, 10-20
            main_road_stops: 13,
            hwm_stops: 3,
            umm_stops: 15,
            umm_grid_rows: 3,
            umm_grid_cols: 12,
            umm_row_spacing: 250.0,
            umm_control: UmmControl::Mixed,
            tlm_green: 30.0,
            ptsm_p: 0.5,
            ptsm_w: 10.0,
            metrobus_dwell: (20.0, 40.0),
            stop_dwell: (5.0, 15.0),
        }
    }
}

impl TopologyParams {
    pub fn check(&self) -> Result<(), RoadError> {
        let bad = |msg: &str| Err(RoadError::InvalidParams(msg.to_string()));
        if !(self.corridor_length > 0.0 && self.corridor_width > 0.0) {
            return bad("corridor dimensions must be positive");
        }
        if [
            self.metrobus_lanes_per_direction,
            self.main_road_lanes_per_direction,
            self.hwm_lanes,
            self.umm_lanes,
        ]
        .contains(&0)
        {
            return bad("every lane count must be at least 1");
        }
        if ![
            self.metrobus_speed,
            self.main_road_speed,
            self.hwm_speed,
            self.umm_speed,
        ]
        .iter()
        .all(|s| *s > 0.0 && s.is_finite())
        {
            return bad("every speed must be positive");
        }
        for (lo, hi) in [self.metrobus_dwell, self.stop_dwell] {
            if !(lo >= 0.0 && lo <= hi) {
                return bad("dwell range must satisfy 0 <= min <= max");
            }
        }
        if !(0.0..=1.0).contains(&self.ptsm_p) || self.ptsm_w <= 0.0 {
            return bad("probabilistic sign needs 0 <= p <= 1 and w > 0");
        }
        if self.tlm_green <= 0.0 {
            return bad("traffic light green time must be positive");
        }
        if self.main_road_offset <= 0.0 || self.umm_row_spacing <= 0.0 {
            return bad("road spacing must be positive");
        }
        Ok(())
    }
}

/// Builds the road network for `kind` from `params`.
pub fn build_topology(params: &TopologyParams, kind: ModelKind) -> Result<RoadNetwork, RoadError> {
    params.check()?;
    let mut b = Builder::default();
    match kind {
        ModelKind::Hmm => build_hybrid(params, &mut b),
        ModelKind::Umm => build_urban(params, &mut b)?,
        ModelKind::Hwm => build_highway(params, &mut b),
    }
    Ok(b.finish(kind))
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    intersections: Vec<Intersection>,
    stations: Vec<StopStation>,
}

impl Builder {
    fn node(&mut self, x: f64, y: f64) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            x: quantize(x),
            y: quantize(y),
        });
        id
    }

    fn edge(
        &mut self,
        from: NodeId,
        to: NodeId,
        lanes: u32,
        speed_limit: f64,
        priority: i32,
        allowed: ClassSet,
    ) -> EdgeId {
        let a = self.nodes[from.0 as usize];
        let b = self.nodes[to.0 as usize];
        let length = quantize(((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt());
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Edge {
            id,
            from,
            to,
            length,
            lanes,
            speed_limit,
            priority,
            allowed,
        });
        id
    }

    /// `count` stations spread uniformly along `edge`, one per equal slice.
    fn spread_stations(
        &mut self,
        edge: EdgeId,
        count: u32,
        dwell: (f64, f64),
        serves: VehicleClass,
    ) {
        let length = self.edges[edge.0 as usize].length;
        for k in 0..count {
            self.stations.push(StopStation {
                edge,
                offset: quantize(length * (k as f64 + 0.5) / count as f64),
                dwell_min: dwell.0,
                dwell_max: dwell.1,
                serves,
            });
        }
    }

    fn finish(self, kind: ModelKind) -> RoadNetwork {
        RoadNetwork::from_parts(
            kind,
            self.nodes,
            self.edges,
            self.intersections,
            self.stations,
        )
    }
}

fn build_hybrid(p: &TopologyParams, b: &mut Builder) {
    let len = p.corridor_length;
    let yc = p.corridor_width / 2.0;

    // Restricted metrobus lanes share their two end nodes.
    let west = b.node(0.0, yc);
    let east = b.node(len, yc);
    let mut bus_edges = vec![b.edge(
        west,
        east,
        p.metrobus_lanes_per_direction,
        p.metrobus_speed,
        3,
        ClassSet::Metrobus,
    )];
    if p.metrobus_bidirectional {
        bus_edges.push(b.edge(
            east,
            west,
            p.metrobus_lanes_per_direction,
            p.metrobus_speed,
            3,
            ClassSet::Metrobus,
        ));
    }
    for e in bus_edges {
        b.spread_stations(
            e,
            p.metrobus_stations,
            p.metrobus_dwell,
            VehicleClass::Metrobus,
        );
    }

    // Two opposing one-way main roads, one edge per inter-stop block, with a
    // stop at the middle of every block.
    let blocks = p.main_road_stops.max(1);
    let chain = |b: &mut Builder, y: f64, eastbound: bool| -> Vec<NodeId> {
        let nodes: Vec<NodeId> = (0..=blocks)
            .map(|k| {
                let x = len * k as f64 / blocks as f64;
                b.node(if eastbound { x } else { len - x }, y)
            })
            .collect();
        for w in nodes.windows(2) {
            let e = b.edge(
                w[0],
                w[1],
                p.main_road_lanes_per_direction,
                p.main_road_speed,
                2,
                ClassSet::Car,
            );
            if p.main_road_stops > 0 {
                b.spread_stations(e, 1, p.stop_dwell, VehicleClass::Car);
            }
        }
        nodes
    };
    // right-hand traffic: eastbound south of the median, westbound north
    let eastbound = chain(b, yc - p.main_road_offset, true);
    let westbound = chain(b, yc + p.main_road_offset, false);

    // Turnarounds at the corridor ends keep the car graph strongly connected.
    let lanes = 1;
    b.edge(
        *eastbound.last().unwrap(),
        westbound[0],
        lanes,
        p.main_road_speed,
        1,
        ClassSet::Car,
    );
    b.edge(
        *westbound.last().unwrap(),
        eastbound[0],
        lanes,
        p.main_road_speed,
        1,
        ClassSet::Car,
    );
}

fn build_urban(p: &TopologyParams, b: &mut Builder) -> Result<(), RoadError> {
    let (rows, cols) = (p.umm_grid_rows, p.umm_grid_cols);
    if rows < 2 || cols < 2 {
        return Err(RoadError::InvalidParams(format!(
            "urban grid must be at least 2x2, got {rows}x{cols}"
        )));
    }
    let dx = p.corridor_length / (cols - 1) as f64;
    let height = p.umm_row_spacing * (rows - 1) as f64;
    let y0 = p.corridor_width / 2.0 - height / 2.0;
    for r in 0..rows {
        for c in 0..cols {
            b.node(c as f64 * dx, y0 + r as f64 * p.umm_row_spacing);
        }
    }
    let at = |r: u32, c: u32| NodeId(r * cols + c);
    let street = |b: &mut Builder, u: NodeId, v: NodeId| {
        b.edge(u, v, p.umm_lanes, p.umm_speed, 1, ClassSet::Car);
        b.edge(v, u, p.umm_lanes, p.umm_speed, 1, ClassSet::Car);
    };
    for r in 0..rows {
        for c in 0..cols - 1 {
            street(b, at(r, c), at(r, c + 1));
        }
    }
    for c in 0..cols {
        for r in 0..rows - 1 {
            street(b, at(r, c), at(r + 1, c));
        }
    }

    let edge_count = b.edges.len() as u32;
    let stops = p.umm_stops;
    for k in 0..stops {
        let e = EdgeId((k as u64 * edge_count as u64 / stops as u64) as u32);
        b.spread_stations(e, 1, p.stop_dwell, VehicleClass::Car);
    }

    for r in 0..rows {
        for c in 0..cols {
            let node = at(r, c);
            let mut approaches: Vec<EdgeId> = b
                .edges
                .iter()
                .filter(|e| e.to == node)
                .map(|e| e.id)
                .collect();
            // corners are plain bends
            if approaches.len() < 3 {
                continue;
            }
            approaches.sort();
            let control = match p.umm_control {
                UmmControl::TrafficLight => signal_plan(b, &approaches, p.tlm_green),
                UmmControl::StopSign => ControlKind::StopSign,
                UmmControl::Probabilistic => ControlKind::ProbabilisticSign {
                    p: p.ptsm_p,
                    w: p.ptsm_w,
                },
                UmmControl::Mixed if (r + c) % 2 == 0 => signal_plan(b, &approaches, p.tlm_green),
                UmmControl::Mixed => ControlKind::StopSign,
            };
            b.intersections.push(Intersection {
                node,
                control,
                approaches,
            });
        }
    }
    Ok(())
}

/// Two-phase plan: the horizontal approach pair, then the vertical pair.
fn signal_plan(b: &Builder, approaches: &[EdgeId], green: f64) -> ControlKind {
    let (mut horizontal, mut vertical) = (Vec::new(), Vec::new());
    for &id in approaches {
        let e = &b.edges[id.0 as usize];
        let (from, to) = (b.nodes[e.from.0 as usize], b.nodes[e.to.0 as usize]);
        if (to.x - from.x).abs() >= (to.y - from.y).abs() {
            horizontal.push(id);
        } else {
            vertical.push(id);
        }
    }
    ControlKind::TrafficLight(PhasePlan {
        phases: [horizontal, vertical]
            .into_iter()
            .filter(|a| !a.is_empty())
            .map(|approaches| Phase {
                approaches,
                duration: green,
            })
            .collect(),
    })
}

fn build_highway(p: &TopologyParams, b: &mut Builder) {
    let yc = p.corridor_width / 2.0;
    let west = b.node(0.0, yc);
    let east = b.node(p.corridor_length, yc);
    let fwd = b.edge(west, east, p.hwm_lanes, p.hwm_speed, 3, ClassSet::Car);
    let back = b.edge(east, west, p.hwm_lanes, p.hwm_speed, 3, ClassSet::Car);
    for e in [fwd, back] {
        b.spread_stations(e, p.hwm_stops, p.stop_dwell, VehicleClass::Car);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::validate_network;

    #[test]
    fn hybrid_uses_table_values() {
        let net = build_topology(&TopologyParams::default(), ModelKind::Hmm).unwrap();
        let bus: Vec<_> = net
            .edges()
            .iter()
            .filter(|e| e.allowed == ClassSet::Metrobus)
            .collect();
        assert_eq!(bus.len(), 2);
        for e in &bus {
            assert_eq!(e.speed_limit, 33.33);
            assert_eq!(e.lanes, 1);
        }
        let bus_stations = net
            .stations()
            .iter()
            .filter(|s| s.edge == bus[0].id)
            .count();
        assert_eq!(bus_stations, 5);
        let main: Vec<_> = net
            .edges()
            .iter()
            .filter(|e| e.allowed == ClassSet::Car && e.priority == 2)
            .collect();
        assert_eq!(main.len(), 2 * 13);
        assert!(main.iter().all(|e| e.speed_limit == 13.89 && e.lanes == 3));
        assert!(validate_network(&net).is_empty());
    }

    #[test]
    fn highway_without_stops() {
        let params = TopologyParams {
            hwm_stops: 0,
            ..TopologyParams::default()
        };
        let net = build_topology(&params, ModelKind::Hwm).unwrap();
        assert!(net.stations().is_empty());
        assert!(net.intersections().is_empty());
        assert!(net
            .edges()
            .iter()
            .all(|e| e.lanes == 4 && e.speed_limit == 33.3));
    }

    #[test]
    fn three_by_three_grid_counts() {
        let params = TopologyParams {
            umm_grid_rows: 3,
            umm_grid_cols: 3,
            ..TopologyParams::default()
        };
        let net = build_topology(&params, ModelKind::Umm).unwrap();
        assert_eq!(net.nodes().len(), 9);
        assert_eq!(net.edges().len(), 24);
        // the centre node is the only node with four neighbours
        let centre = net.control(NodeId(4)).expect("centre must be controlled");
        assert_eq!(centre.approaches.len(), 4);
        // corners carry no control, T-junctions do
        for corner in [0, 2, 6, 8] {
            assert!(net.control(NodeId(corner)).is_none());
        }
        assert_eq!(net.intersections().len(), 5);
        assert!(validate_network(&net).is_empty());
    }

    #[test]
    fn tiny_grid_rejected() {
        let params = TopologyParams {
            umm_grid_rows: 1,
            umm_grid_cols: 5,
            ..TopologyParams::default()
        };
        assert!(matches!(
            build_topology(&params, ModelKind::Umm),
            Err(RoadError::InvalidParams(_))
        ));
    }

    #[test]
    fn zero_lanes_rejected() {
        let params = TopologyParams {
            hwm_lanes: 0,
            ..TopologyParams::default()
        };
        assert!(build_topology(&params, ModelKind::Hwm).is_err());
    }

    #[test]
    fn build_is_pure() {
        for kind in ModelKind::ALL {
            let a = build_topology(&TopologyParams::default(), kind).unwrap();
            let b = build_topology(&TopologyParams::default(), kind).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn signal_plans_cover_every_approach() {
        let params = TopologyParams {
            umm_control: UmmControl::TrafficLight,
            ..TopologyParams::default()
        };
        let net = build_topology(&params, ModelKind::Umm).unwrap();
        for ix in net.intersections() {
            let ControlKind::TrafficLight(plan) = &ix.control else {
                panic!("expected a signal at {}", ix.node);
            };
            let mut covered: Vec<EdgeId> = plan
                .phases
                .iter()
                .flat_map(|p| p.approaches.clone())
                .collect();
            covered.sort();
            assert_eq!(covered, ix.approaches);
            assert_eq!(plan.cycle(), 60.0);
        }
    }
}
