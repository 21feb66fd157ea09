//! Trace-driven discrete-event packet simulation: disk radio with
//! interference collisions, slotted CSMA, AODV routing and CBR sources.

mod aodv;
mod channel;
mod metrics;
mod positions;
mod sim;

pub use aodv::{
    aodv_handle, Action, AodvInput, AodvNodeState, ControlMsg, DataPacket, RouteEntry,
    ACTIVE_ROUTE_TIMEOUT, DATA_TTL, DISCOVERY_TIMEOUT, PENDING_CAPACITY, RREQ_RETRIES,
};
pub use channel::{airtime, channel_deliver, in_range, Pos, Reception, Transmission};
pub use metrics::{compute_metrics, FlowMetrics, Metrics, MetricsReport, SweepKey, CSV_HEADER};
pub use positions::{positions_at, TraceIndex};
pub use sim::{cbr_generate, run_network_sim, simulate, NetworkRun};

use thiserror::Error;

use crate::mobility::VehicleId;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("time {0} lies outside the trace span")]
    UnknownTime(f64),
    #[error("no packet records to summarise")]
    EmptyInput,
    #[error("invalid radio parameters: {0}")]
    InvalidRadio(String),
    #[error("invalid flow {index}: {msg}")]
    InvalidFlow { index: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    /// meters
    pub tx_range: f64,
    /// meters; transmitters this close to a listener corrupt its reception
    pub interference_range: f64,
    /// bits/s
    pub bitrate: f64,
    /// MAC, IP and UDP header bytes added to every frame
    pub per_hop_overhead: u32,
    /// seconds
    pub slot: f64,
    pub max_backoff_slots: u32,
    /// When false, overlapping transmissions never corrupt each other.
    pub collisions: bool,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams::with_range(250.0)
    }
}

impl RadioParams {
    /// Defaults with the interference range tied to 1.8 × `tx_range`.
    pub fn with_range(tx_range: f64) -> Self {
        RadioParams {
            tx_range,
            interference_range: 1.8 * tx_range,
            bitrate: 10e6,
            per_hop_overhead: 56,
            slot: 13e-6,
            max_backoff_slots: 15,
            collisions: true,
        }
    }

    pub fn check(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidRadio(m.to_string()));
        if !(self.tx_range > 0.0) {
            return bad("tx_range must be positive");
        }
        if !(self.interference_range >= self.tx_range) {
            return bad("interference_range must be at least tx_range");
        }
        if !(self.bitrate > 0.0) {
            return bad("bitrate must be positive");
        }
        if !(self.slot >= 0.0) {
            return bad("slot must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbrFlowConfig {
    pub src: VehicleId,
    pub dst: VehicleId,
    /// bytes
    pub packet_size: u32,
    /// seconds between packets
    pub interval: f64,
    pub start: f64,
    pub stop: f64,
}

impl CbrFlowConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.src == self.dst {
            return Err("source and destination coincide".into());
        }
        if self.packet_size == 0 {
            return Err("packet_size must be positive".into());
        }
        if !(self.interval > 0.0) {
            return Err("interval must be positive".into());
        }
        if !(self.start < self.stop) {
            return Err("start must precede stop".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    Delivered,
    DroppedNoRoute,
    DroppedCollision,
    DroppedTtl,
    DroppedQueueOverflow,
    InFlightAtEnd,
}

impl Disposition {
    pub fn is_drop(self) -> bool {
        !matches!(self, Disposition::Delivered | Disposition::InFlightAtEnd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub flow: usize,
    pub created: f64,
    pub delivered_at: Option<f64>,
    pub hops: u32,
    pub disposition: Disposition,
    /// Nodes visited, source first.
    pub path: Vec<VehicleId>,
}
