//! Line-oriented network text format:
//!
//! ```text
//! MODEL HMM
//! NODE id x y
//! EDGE id from to length lanes speed priority class
//! STATION edge offset dwell_min dwell_max class
//! CONTROL node none | stop | ptsm p w | tlm duration edges[,edges] ...
//! ```
//!
//! Floats carry 6 decimals. Intersection approaches are not stored; they are
//! the node's incoming edges.

use std::fmt::Write as _;

use super::{
    ControlKind, Edge, EdgeId, Intersection, ModelKind, Node, NodeId, Phase, PhasePlan, RoadError,
    RoadNetwork, StopStation,
};

pub fn write_network(net: &RoadNetwork) -> String {
    let mut out = String::new();
    writeln!(out, "MODEL {}", net.kind()).unwrap();
    for n in net.nodes() {
        writeln!(out, "NODE {} {:.6} {:.6}", n.id, n.x, n.y).unwrap();
    }
    for e in net.edges() {
        writeln!(
            out,
            "EDGE {} {} {} {:.6} {} {:.6} {} {}",
            e.id,
            e.from,
            e.to,
            e.length,
            e.lanes,
            e.speed_limit,
            e.priority,
            e.allowed.as_str()
        )
        .unwrap();
    }
    for s in net.stations() {
        writeln!(
            out,
            "STATION {} {:.6} {:.6} {:.6} {}",
            s.edge, s.offset, s.dwell_min, s.dwell_max, s.serves
        )
        .unwrap();
    }
    for ix in net.intersections() {
        write!(out, "CONTROL {}", ix.node).unwrap();
        match &ix.control {
            ControlKind::None => out.push_str(" none"),
            ControlKind::StopSign => out.push_str(" stop"),
            ControlKind::ProbabilisticSign { p, w } => write!(out, " ptsm {p:.6} {w:.6}").unwrap(),
            ControlKind::TrafficLight(plan) => {
                out.push_str(" tlm");
                for phase in &plan.phases {
                    let edges: Vec<String> =
                        phase.approaches.iter().map(|e| e.to_string()).collect();
                    write!(out, " {:.6} {}", phase.duration, edges.join(",")).unwrap();
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_network(text: &str) -> Result<RoadNetwork, RoadError> {
    let mut kind = None;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut stations = Vec::new();
    let mut controls: Vec<(NodeId, ControlKind)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| RoadError::Parse { line, msg };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let Some((&tag, rest)) = fields.split_first() else {
            continue;
        };
        let num = |i: usize| -> Result<f64, RoadError> {
            rest.get(i)
                .ok_or_else(|| err(format!("missing field {}", i + 1)))?
                .parse::<f64>()
                .map_err(|e| err(e.to_string()))
        };
        let int = |i: usize| -> Result<i64, RoadError> {
            rest.get(i)
                .ok_or_else(|| err(format!("missing field {}", i + 1)))?
                .parse::<i64>()
                .map_err(|e| err(e.to_string()))
        };
        let word = |i: usize| -> Result<&str, RoadError> {
            rest.get(i)
                .copied()
                .ok_or_else(|| err(format!("missing field {}", i + 1)))
        };
        match tag {
            "MODEL" => kind = Some(word(0)?.parse::<ModelKind>().map_err(err)?),
            "NODE" => nodes.push(Node {
                id: NodeId(int(0)? as u32),
                x: num(1)?,
                y: num(2)?,
            }),
            "EDGE" => edges.push(Edge {
                id: EdgeId(int(0)? as u32),
                from: NodeId(int(1)? as u32),
                to: NodeId(int(2)? as u32),
                length: num(3)?,
                lanes: int(4)? as u32,
                speed_limit: num(5)?,
                priority: int(6)? as i32,
                allowed: word(7)?.parse().map_err(err)?,
            }),
            "STATION" => stations.push(StopStation {
                edge: EdgeId(int(0)? as u32),
                offset: num(1)?,
                dwell_min: num(2)?,
                dwell_max: num(3)?,
                serves: word(4)?.parse().map_err(err)?,
            }),
            "CONTROL" => {
                let node = NodeId(int(0)? as u32);
                let control = match word(1)? {
                    "none" => ControlKind::None,
                    "stop" => ControlKind::StopSign,
                    "ptsm" => ControlKind::ProbabilisticSign {
                        p: num(2)?,
                        w: num(3)?,
                    },
                    "tlm" => {
                        let mut phases = Vec::new();
                        let mut i = 2;
                        while i < rest.len() {
                            let duration = num(i)?;
                            let approaches = word(i + 1)?
                                .split(',')
                                .map(|s| s.parse::<u32>().map(EdgeId))
                                .collect::<Result<Vec<_>, _>>()
                                .map_err(|e| err(e.to_string()))?;
                            phases.push(Phase {
                                approaches,
                                duration,
                            });
                            i += 2;
                        }
                        ControlKind::TrafficLight(PhasePlan { phases })
                    }
                    other => return Err(err(format!("unknown control kind `{other}`"))),
                };
                controls.push((node, control));
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }

    let kind = kind.ok_or(RoadError::Parse {
        line: 0,
        msg: "missing MODEL record".into(),
    })?;
    for (i, n) in nodes.iter().enumerate() {
        if n.id.0 as usize != i {
            return Err(RoadError::Parse {
                line: 0,
                msg: format!("node ids must be dense and ordered, found {} at {i}", n.id),
            });
        }
    }
    for (i, e) in edges.iter().enumerate() {
        if e.id.0 as usize != i {
            return Err(RoadError::Parse {
                line: 0,
                msg: format!("edge ids must be dense and ordered, found {} at {i}", e.id),
            });
        }
    }
    let intersections = controls
        .into_iter()
        .map(|(node, control)| {
            let mut approaches: Vec<EdgeId> = edges
                .iter()
                .filter(|e| e.to == node)
                .map(|e| e.id)
                .collect();
            approaches.sort();
            Intersection {
                node,
                control,
                approaches,
            }
        })
        .collect();
    Ok(RoadNetwork::from_parts(
        kind,
        nodes,
        edges,
        intersections,
        stations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{build_topology, TopologyParams, UmmControl};

    #[test]
    fn round_trip_is_exact() {
        for control in [UmmControl::Mixed, UmmControl::Probabilistic] {
            let params = TopologyParams {
                umm_control: control,
                ..TopologyParams::default()
            };
            for kind in ModelKind::ALL {
                let net = build_topology(&params, kind).unwrap();
                let text = write_network(&net);
                let back = parse_network(&text).unwrap();
                assert_eq!(back, net, "{kind}");
                assert_eq!(write_network(&back), text);
            }
        }
    }

    #[test]
    fn record_shapes() {
        let net = build_topology(&TopologyParams::default(), ModelKind::Hwm).unwrap();
        let text = write_network(&net);
        assert!(text.starts_with("MODEL HWM\nNODE 0 0.000000 967.000000\n"));
        assert!(text.contains("\nEDGE 0 0 1 6380.000000 4 33.300000 3 car\n"));
        assert!(text.contains("\nSTATION 0 1063.333333 5.000000 15.000000 car\n"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_network("MODEL HWM\nNODE 0 0 0\nEDGE 0 0 x\n").unwrap_err();
        assert!(matches!(err, RoadError::Parse { line: 3, .. }));
        let err = parse_network("MODEL HWM\nBOGUS\n").unwrap_err();
        assert!(matches!(err, RoadError::Parse { line: 2, .. }));
    }
}
