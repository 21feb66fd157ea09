//! Vehicular mobility trace generation for hybrid (bus-rapid-transit
//! corridor), urban and highway road models, and a trace-driven packet
//! simulator with AODV routing and CBR traffic.

pub mod experiment;
pub mod mobility;
pub mod netsim;
pub mod parallel;
pub mod rng;
pub mod road;
