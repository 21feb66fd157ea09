use super::RadioParams;
use crate::mobility::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

impl Pos {
    pub fn distance(self, other: Pos) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Inclusive disk test.
pub fn in_range(a: Pos, b: Pos, range: f64) -> bool {
    a.distance(b) <= range
}

/// Seconds on air for a frame carrying `size` payload bytes.
pub fn airtime(size: u32, radio: &RadioParams) -> f64 {
    (size + radio.per_hop_overhead) as f64 * 8.0 / radio.bitrate
}

/// One frame on the air. Positions are taken when it starts; frames last
/// well under a millisecond.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub sender: VehicleId,
    pub sender_pos: Pos,
    pub start: f64,
    pub end: f64,
}

impl Transmission {
    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Received,
    CollisionLoss,
    OutOfRange,
}

/// Outcome of `tx` at each listener. `concurrent` may contain `tx` itself
/// and frames that do not overlap it; both are ignored. A listener that is
/// itself transmitting during `tx` cannot receive it.
pub fn channel_deliver(
    tx: &Transmission,
    listeners: &[(VehicleId, Pos)],
    concurrent: &[Transmission],
    radio: &RadioParams,
) -> Vec<(VehicleId, Reception)> {
    let others: Vec<&Transmission> = concurrent
        .iter()
        .filter(|c| *c != tx && c.overlaps(tx))
        .collect();
    listeners
        .iter()
        .filter(|(id, _)| *id != tx.sender)
        .map(|&(id, pos)| {
            let outcome = if !in_range(tx.sender_pos, pos, radio.tx_range) {
                Reception::OutOfRange
            } else if others.iter().any(|c| {
                c.sender == id
                    || (radio.collisions && in_range(c.sender_pos, pos, radio.interference_range))
            }) {
                Reception::CollisionLoss
            } else {
                Reception::Received
            };
            (id, outcome)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Pos {
        Pos { x, y }
    }

    fn tx(sender: u32, at: Pos, start: f64) -> Transmission {
        Transmission {
            sender: VehicleId(sender),
            sender_pos: at,
            start,
            end: start + 0.001,
        }
    }

    #[test]
    fn disk_boundary() {
        assert!(in_range(p(0.0, 0.0), p(30.0, 40.0), 50.0));
        assert!(!in_range(p(0.0, 0.0), p(30.0, 40.0), 49.99));
        assert!(in_range(p(7.0, 7.0), p(7.0, 7.0), 1e-9));
    }

    #[test]
    fn airtime_of_a_data_frame() {
        let radio = RadioParams::default();
        assert!((airtime(512, &radio) - (512.0 + 56.0) * 8.0 / 10e6).abs() < 1e-15);
    }

    #[test]
    fn lone_frame_reaches_listeners_in_range() {
        let radio = RadioParams::with_range(100.0);
        let a = tx(0, p(0.0, 0.0), 0.0);
        let out = channel_deliver(
            &a,
            &[(VehicleId(1), p(60.0, 0.0)), (VehicleId(2), p(101.0, 0.0))],
            &[],
            &radio,
        );
        assert_eq!(
            out,
            vec![
                (VehicleId(1), Reception::Received),
                (VehicleId(2), Reception::OutOfRange)
            ]
        );
    }

    #[test]
    fn overlapping_senders_collide() {
        let radio = RadioParams::with_range(100.0);
        let a = tx(0, p(0.0, 0.0), 0.0);
        let b = tx(2, p(150.0, 0.0), 0.0005);
        let listener = [(VehicleId(1), p(50.0, 0.0))];
        let out = channel_deliver(&a, &listener, &[a.clone(), b.clone()], &radio);
        assert_eq!(out[0].1, Reception::CollisionLoss);
        // the interferer is beyond 1.8 × range once it moves far enough
        let far = tx(2, p(240.0, 0.0), 0.0005);
        let out = channel_deliver(&a, &listener, &[far], &radio);
        assert_eq!(out[0].1, Reception::Received);
        // frames that end before this one starts do not interfere
        let earlier = Transmission {
            start: -0.01,
            end: 0.0,
            ..b.clone()
        };
        assert_eq!(
            channel_deliver(&a, &listener, &[earlier], &radio)[0].1,
            Reception::Received
        );
        let ideal = RadioParams {
            collisions: false,
            ..radio
        };
        assert_eq!(
            channel_deliver(&a, &listener, &[b], &ideal)[0].1,
            Reception::Received
        );
    }

    #[test]
    fn half_duplex() {
        let radio = RadioParams::with_range(100.0);
        let a = tx(0, p(0.0, 0.0), 0.0);
        let b = tx(1, p(50.0, 0.0), 0.0002);
        let out = channel_deliver(
            &a,
            &[(VehicleId(1), p(50.0, 0.0))],
            &[b],
            &RadioParams {
                collisions: false,
                ..radio
            },
        );
        assert_eq!(out[0].1, Reception::CollisionLoss);
    }
}
