//! Text exports of mobility traces.
//!
//! `Ns2Movement` follows the ns-2 movement script layout: initial `set X_`,
//! `Y_`, `Z_` lines per node, then `setdest` commands. A `setdest` issued at
//! sample time `t` targets the node's position at `t + dt` with the speed
//! recorded there; the step is carried in a leading `# dt` comment so the
//! script can be read back.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{MobilityConfig, MobilityError, MobilityTrace, TraceRecord, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Ns2Movement,
    NativeCsv,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ns2" => Ok(TraceFormat::Ns2Movement),
            "csv" => Ok(TraceFormat::NativeCsv),
            other => Err(format!(
                "unknown trace format `{other}` (expected ns2 or csv)"
            )),
        }
    }
}

const CSV_HEADER: &str = "time,vehicle,x,y,speed";

pub fn export_trace(trace: &MobilityTrace, format: TraceFormat) -> String {
    match format {
        TraceFormat::NativeCsv => export_csv(trace),
        TraceFormat::Ns2Movement => export_ns2(trace),
    }
}

fn export_csv(trace: &MobilityTrace) -> String {
    let mut out = String::with_capacity(40 * (trace.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        writeln!(
            out,
            "{:.6},{},{:.6},{:.6},{:.6}",
            r.time, r.vehicle, r.x, r.y, r.speed
        )
        .unwrap();
    }
    out
}

fn export_ns2(trace: &MobilityTrace) -> String {
    let mut out = String::new();
    writeln!(out, "# dt {:.6}", trace.config_echo.dt).unwrap();
    let per_vehicle = by_vehicle(&trace.records);
    for (id, recs) in &per_vehicle {
        let first = recs[0];
        writeln!(out, "$node_({id}) set X_ {:.6}", first.x).unwrap();
        writeln!(out, "$node_({id}) set Y_ {:.6}", first.y).unwrap();
        writeln!(out, "$node_({id}) set Z_ 0.0").unwrap();
    }
    let mut moves: Vec<(f64, VehicleId, &TraceRecord)> = per_vehicle
        .iter()
        .flat_map(|(id, recs)| recs.windows(2).map(move |w| (w[0].time, *id, w[1])))
        .collect();
    moves.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, id, to) in moves {
        writeln!(
            out,
            "$ns_ at {t:.6} \"$node_({id}) setdest {:.6} {:.6} {:.6}\"",
            to.x, to.y, to.speed
        )
        .unwrap();
    }
    out
}

fn by_vehicle(records: &[TraceRecord]) -> BTreeMap<VehicleId, Vec<&TraceRecord>> {
    let mut map: BTreeMap<VehicleId, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.vehicle).or_default().push(r);
    }
    map
}

/// Reads a trace written by [`export_trace`]. Parsed traces carry no network
/// kind, lane samples or crossings.
pub fn parse_trace(text: &str, format: TraceFormat) -> Result<MobilityTrace, MobilityError> {
    let (mut records, dt) = match format {
        TraceFormat::NativeCsv => (parse_csv(text)?, None),
        TraceFormat::Ns2Movement => {
            let (records, dt) = parse_ns2(text)?;
            (records, Some(dt))
        }
    };
    records.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.vehicle.cmp(&b.vehicle)));
    let mut config_echo = MobilityConfig::default();
    let vehicles = by_vehicle(&records).len() as u32;
    config_echo.vehicle_count = vehicles.max(1);
    config_echo.dt = dt.unwrap_or_else(|| infer_dt(&records).unwrap_or(config_echo.dt));
    config_echo.duration = records.last().map_or(0.0, |r| r.time);
    Ok(MobilityTrace {
        records,
        config_echo,
        network_kind: None,
        lane_samples: Vec::new(),
        crossings: Vec::new(),
    })
}

fn infer_dt(records: &[TraceRecord]) -> Option<f64> {
    let mut times: Vec<f64> = records.iter().map(|r| r.time).collect();
    times.dedup();
    times.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

fn parse_err(line: usize, msg: impl Into<String>) -> MobilityError {
    MobilityError::Parse {
        line,
        msg: msg.into(),
    }
}

fn number(s: &str, line: usize) -> Result<f64, MobilityError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(line, format!("`{s}`: {e}")))
}

fn parse_csv(text: &str) -> Result<Vec<TraceRecord>, MobilityError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(
                line,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let vehicle = f[1]
            .trim()
            .parse::<u32>()
            .map_err(|e| parse_err(line, format!("vehicle id: {e}")))?;
        records.push(TraceRecord {
            time: number(f[0], line)?,
            vehicle: VehicleId(vehicle),
            x: number(f[2], line)?,
            y: number(f[3], line)?,
            speed: number(f[4], line)?,
        });
    }
    Ok(records)
}

/// `$node_(12)` → 12
fn node_id(token: &str, line: usize) -> Result<VehicleId, MobilityError> {
    token
        .trim_start_matches('"')
        .strip_prefix("$node_(")
        .and_then(|s| s.strip_suffix(')'))
        .and_then(|s| s.parse::<u32>().ok())
        .map(VehicleId)
        .ok_or_else(|| parse_err(line, format!("bad node reference `{token}`")))
}

fn parse_ns2(text: &str) -> Result<(Vec<TraceRecord>, f64), MobilityError> {
    let mut dt = None;
    let mut start: BTreeMap<VehicleId, [Option<f64>; 2]> = BTreeMap::new();
    let mut moves: Vec<(f64, VehicleId, f64, f64, f64, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let mut w = rest.split_whitespace();
            if w.next() == Some("dt") {
                let v = w
                    .next()
                    .ok_or_else(|| parse_err(line, "missing dt value"))?;
                dt = Some(number(v, line)?);
            }
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match f.as_slice() {
            [node, "set", axis, value] => {
                let id = node_id(node, line)?;
                let v = number(value, line)?;
                let slot = start.entry(id).or_default();
                match *axis {
                    "X_" => slot[0] = Some(v),
                    "Y_" => slot[1] = Some(v),
                    "Z_" => {}
                    other => return Err(parse_err(line, format!("unknown axis `{other}`"))),
                }
            }
            ["$ns_", "at", time, node, "setdest", x, y, speed] => {
                let speed = speed.trim_end_matches('"');
                moves.push((
                    number(time, line)?,
                    node_id(node, line)?,
                    number(x, line)?,
                    number(y, line)?,
                    number(speed, line)?,
                    line,
                ));
            }
            _ => return Err(parse_err(line, "unrecognised movement command")),
        }
    }

    let dt = match dt {
        Some(dt) => dt,
        None => {
            let mut times: Vec<f64> = moves.iter().map(|m| m.0).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            times
                .windows(2)
                .map(|w| w[1] - w[0])
                .reduce(f64::min)
                .ok_or_else(|| {
                    parse_err(0, "cannot determine the sample step; add a `# dt` line")
                })?
        }
    };

    let mut records = Vec::with_capacity(start.len() + moves.len());
    let mut first_move: BTreeMap<VehicleId, f64> = BTreeMap::new();
    for m in &moves {
        let e = first_move.entry(m.1).or_insert(m.0);
        *e = e.min(m.0);
    }
    for (id, xy) in &start {
        let [Some(x), Some(y)] = *xy else {
            return Err(parse_err(0, format!("node {id} lacks an initial X_ or Y_")));
        };
        records.push(TraceRecord {
            time: first_move.get(id).copied().unwrap_or(0.0),
            vehicle: *id,
            x,
            y,
            speed: 0.0,
        });
    }
    for (t, id, x, y, speed, line) in moves {
        if !start.contains_key(&id) {
            return Err(parse_err(
                line,
                format!("node {id} moves before its initial position"),
            ));
        }
        records.push(TraceRecord {
            time: crate::road::quantize(t + dt),
            vehicle: id,
            x,
            y,
            speed,
        });
    }
    Ok((records, dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(records: Vec<TraceRecord>) -> MobilityTrace {
        MobilityTrace {
            records,
            config_echo: MobilityConfig::default(),
            network_kind: None,
            lane_samples: Vec::new(),
            crossings: Vec::new(),
        }
    }

    fn rec(time: f64, v: u32, x: f64, y: f64, speed: f64) -> TraceRecord {
        TraceRecord {
            time,
            vehicle: VehicleId(v),
            x,
            y,
            speed,
        }
    }

    #[test]
    fn single_move_literals() {
        let t = trace(vec![
            rec(0.0, 0, 5.0, 10.0, 0.0),
            rec(1.0, 0, 20.0, 10.0, 13.89),
        ]);
        let text = export_trace(&t, TraceFormat::Ns2Movement);
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            body,
            vec![
                "$node_(0) set X_ 5.000000",
                "$node_(0) set Y_ 10.000000",
                "$node_(0) set Z_ 0.0",
                "$ns_ at 0.000000 \"$node_(0) setdest 20.000000 10.000000 13.890000\"",
            ]
        );
    }

    #[test]
    fn empty_traces() {
        let t = trace(Vec::new());
        assert_eq!(
            export_trace(&t, TraceFormat::NativeCsv),
            "time,vehicle,x,y,speed\n"
        );
        let ns2 = export_trace(&t, TraceFormat::Ns2Movement);
        assert!(ns2.lines().all(|l| l.starts_with('#')));
    }

    #[test]
    fn csv_rows() {
        let t = trace(vec![rec(0.0, 3, 1.5, 2.25, 0.0)]);
        assert_eq!(
            export_trace(&t, TraceFormat::NativeCsv),
            "time,vehicle,x,y,speed\n0.000000,3,1.500000,2.250000,0.000000\n"
        );
    }

    #[test]
    fn both_formats_round_trip() {
        let recs = vec![
            rec(0.0, 0, 5.0, 10.0, 0.0),
            rec(0.0, 1, 100.0, 7.5, 0.0),
            rec(1.0, 0, 7.6, 10.0, 2.6),
            rec(1.0, 1, 100.0, 7.5, 0.0),
            rec(2.0, 0, 12.8, 10.0, 5.2),
            rec(2.0, 1, 98.123456, 7.5, 1.876544),
        ];
        let t = trace(recs.clone());
        for format in [TraceFormat::NativeCsv, TraceFormat::Ns2Movement] {
            let text = export_trace(&t, format);
            let back = parse_trace(&text, format).unwrap();
            assert_eq!(back.records.len(), recs.len());
            for (a, b) in back.records.iter().zip(&recs) {
                assert_eq!((a.time, a.vehicle), (b.time, b.vehicle));
                assert!((a.x - b.x).abs() <= 1e-6 && (a.y - b.y).abs() <= 1e-6);
            }
            assert_eq!(export_trace(&back, format), text);
        }
    }

    #[test]
    fn ns2_without_dt_header_infers_step() {
        let text = "$node_(0) set X_ 0.0\n$node_(0) set Y_ 0.0\n$node_(0) set Z_ 0.0\n\
                    $ns_ at 0.5 \"$node_(0) setdest 1.0 0.0 2.0\"\n\
                    $ns_ at 1.0 \"$node_(0) setdest 2.0 0.0 2.0\"\n";
        let t = parse_trace(text, TraceFormat::Ns2Movement).unwrap();
        let times: Vec<f64> = t.records.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![0.5, 1.0, 1.5]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_trace(
            "time,vehicle,x,y,speed\n0,0,1,2,3\n0,zero,1,2,3\n",
            TraceFormat::NativeCsv,
        )
        .unwrap_err();
        assert!(matches!(err, MobilityError::Parse { line: 3, .. }));
        let err = parse_trace("# dt 1\nbogus line\n", TraceFormat::Ns2Movement).unwrap_err();
        assert!(matches!(err, MobilityError::Parse { line: 2, .. }));
    }
}
