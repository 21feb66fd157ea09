use std::fmt::Write as _;

use super::{Disposition, NetError, PacketRecord};
use crate::road::ModelKind;

pub const CSV_HEADER: &str =
    "model,vehicles,cbr_sources,tx_range,seed,sent,delivered,dropped,pdf,mean_delay_s";

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    /// delivered / sent
    pub pdf: f64,
    /// Mean over delivered packets; `None` when nothing arrived.
    pub mean_e2e_delay: Option<f64>,
    /// Number of dropped packets; in-flight packets are not lost.
    pub loss: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMetrics {
    pub flow: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepKey {
    pub model: ModelKind,
    pub vehicles: u32,
    pub cbr_sources: u32,
    pub tx_range: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub totals: Metrics,
    pub per_flow: Vec<FlowMetrics>,
    pub sweep_key: Option<SweepKey>,
}

impl MetricsReport {
    /// One line matching [`CSV_HEADER`]; an absent delay is an empty field.
    pub fn csv_row(&self) -> Option<String> {
        let k = self.sweep_key.as_ref()?;
        let m = &self.totals;
        let mut row = format!(
            "{},{},{},{:.6},{},{},{},{},{:.6},",
            k.model.as_str(),
            k.vehicles,
            k.cbr_sources,
            k.tx_range,
            k.seed,
            m.sent,
            m.delivered,
            m.dropped,
            m.pdf
        );
        if let Some(d) = m.mean_e2e_delay {
            write!(row, "{d:.6}").unwrap();
        }
        Some(row)
    }
}

/// Summarises packet outcomes. Fails on an empty record set, where the
/// ratios are undefined.
pub fn compute_metrics(records: &[PacketRecord]) -> Result<Metrics, NetError> {
    if records.is_empty() {
        return Err(NetError::EmptyInput);
    }
    let sent = records.len() as u64;
    let mut delivered = 0u64;
    let mut dropped = 0u64;
    let mut in_flight = 0u64;
    let mut delay_sum = 0.0;
    for r in records {
        match r.disposition {
            Disposition::Delivered => {
                delivered += 1;
                delay_sum += r
                    .delivered_at
                    .expect("delivered packet without arrival time")
                    - r.created;
            }
            Disposition::InFlightAtEnd => in_flight += 1,
            _ => dropped += 1,
        }
    }
    Ok(Metrics {
        sent,
        delivered,
        dropped,
        in_flight,
        pdf: delivered as f64 / sent as f64,
        mean_e2e_delay: (delivered > 0).then(|| delay_sum / delivered as f64),
        loss: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(created: f64, delivered_at: Option<f64>, disposition: Disposition) -> PacketRecord {
        PacketRecord {
            packet_id: 0,
            flow: 0,
            created,
            delivered_at,
            hops: 1,
            disposition,
            path: Vec::new(),
        }
    }

    #[test]
    fn delays_average_over_delivered_only() {
        let records = [
            rec(0.0, Some(1.0), Disposition::Delivered),
            rec(1.0, Some(4.0), Disposition::Delivered),
            rec(2.0, None, Disposition::DroppedNoRoute),
            rec(3.0, None, Disposition::InFlightAtEnd),
        ];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.mean_e2e_delay, Some(2.0));
        assert_eq!((m.sent, m.delivered, m.dropped, m.in_flight), (4, 2, 1, 1));
        assert_eq!(m.pdf, 0.5);
        assert_eq!(m.loss, 1);
    }

    #[test]
    fn ratio_and_loss_count() {
        let mut records: Vec<PacketRecord> = (0..8)
            .map(|i| rec(i as f64, Some(i as f64 + 0.5), Disposition::Delivered))
            .collect();
        records.push(rec(8.0, None, Disposition::DroppedQueueOverflow));
        records.push(rec(9.0, None, Disposition::DroppedTtl));
        let m = compute_metrics(&records).unwrap();
        assert_eq!((m.pdf, m.loss), (0.8, 2));
    }

    #[test]
    fn in_flight_is_neither_delivered_nor_lost() {
        let records = vec![rec(0.0, None, Disposition::InFlightAtEnd); 3];
        let m = compute_metrics(&records).unwrap();
        assert_eq!((m.pdf, m.loss, m.in_flight), (0.0, 0, 3));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(compute_metrics(&[]), Err(NetError::EmptyInput));
    }

    #[test]
    fn nothing_delivered_has_no_delay() {
        let m = compute_metrics(&[rec(0.0, None, Disposition::DroppedTtl)]).unwrap();
        assert_eq!(m.mean_e2e_delay, None);
        assert_eq!(m.pdf, 0.0);
    }

    #[test]
    fn csv_row_layout() {
        let m = compute_metrics(&[
            rec(0.0, Some(0.25), Disposition::Delivered),
            rec(0.0, None, Disposition::DroppedCollision),
        ])
        .unwrap();
        let report = MetricsReport {
            totals: m,
            per_flow: Vec::new(),
            sweep_key: Some(SweepKey {
                model: ModelKind::Hwm,
                vehicles: 40,
                cbr_sources: 5,
                tx_range: 250.0,
                seed: 3,
            }),
        };
        assert_eq!(
            report.csv_row().unwrap(),
            "HWM,40,5,250.000000,3,2,1,1,0.500000,0.250000"
        );
        assert_eq!(
            CSV_HEADER.split(',').count(),
            report.csv_row().unwrap().split(',').count()
        );
    }
}
