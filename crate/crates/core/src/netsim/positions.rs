use std::collections::BTreeMap;

use super::{NetError, Pos};
use crate::mobility::{MobilityTrace, VehicleId};

/// Time-major view of a trace for fast position lookups.
#[derive(Debug, Clone)]
pub struct TraceIndex {
    vehicles: Vec<VehicleId>,
    times: Vec<f64>,
    /// `samples[k][v]`: position of vehicle `v` at `times[k]`, if recorded.
    samples: Vec<Vec<Option<Pos>>>,
}

impl TraceIndex {
    pub fn new(trace: &MobilityTrace) -> Self {
        let vehicles = trace.vehicles();
        let slot: BTreeMap<VehicleId, usize> =
            vehicles.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut times: Vec<f64> = Vec::new();
        let mut samples: Vec<Vec<Option<Pos>>> = Vec::new();
        for r in &trace.records {
            if times.last() != Some(&r.time) {
                times.push(r.time);
                samples.push(vec![None; vehicles.len()]);
            }
            samples.last_mut().unwrap()[slot[&r.vehicle]] = Some(Pos { x: r.x, y: r.y });
        }
        TraceIndex {
            vehicles,
            times,
            samples,
        }
    }

    /// Vehicle ids in ascending order; positions use the same indexing.
    pub fn vehicles(&self) -> &[VehicleId] {
        &self.vehicles
    }

    pub fn start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Linear interpolation between the bracketing samples; a vehicle
    /// missing from either bracket is absent.
    pub fn positions_into(&self, t: f64, out: &mut Vec<Option<Pos>>) -> Result<(), NetError> {
        if self.times.is_empty() || t < self.start() || t > self.end() || t.is_nan() {
            return Err(NetError::UnknownTime(t));
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        out.clear();
        if self.times[k] == t || k + 1 == self.times.len() {
            out.extend_from_slice(&self.samples[k]);
            return Ok(());
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let f = (t - t0) / (t1 - t0);
        out.extend(
            self.samples[k]
                .iter()
                .zip(&self.samples[k + 1])
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(Pos {
                        x: a.x + (b.x - a.x) * f,
                        y: a.y + (b.y - a.y) * f,
                    }),
                    _ => None,
                }),
        );
        Ok(())
    }

    pub fn positions(&self, t: f64) -> Result<Vec<Option<Pos>>, NetError> {
        let mut out = Vec::with_capacity(self.vehicles.len());
        self.positions_into(t, &mut out)?;
        Ok(out)
    }
}

/// Positions of every vehicle present at `t`.
pub fn positions_at(trace: &MobilityTrace, t: f64) -> Result<BTreeMap<VehicleId, Pos>, NetError> {
    let index = TraceIndex::new(trace);
    let pos = index.positions(t)?;
    Ok(index
        .vehicles()
        .iter()
        .zip(pos)
        .filter_map(|(v, p)| p.map(|p| (*v, p)))
        .collect())
}
