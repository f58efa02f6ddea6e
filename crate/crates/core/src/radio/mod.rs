//! Broadcast wireless channel: two-ray path loss, a position-based collision
//! medium with a simplified CSMA, channel-busy accounting and
//! zone-of-preference geometry.

mod mac;
mod medium;
mod propagation;
mod zop;

pub use mac::{backoff_slots, Enqueued, Mac, MacState, BACKOFF_SLOTS, MAC_QUEUE_LIMIT, SLOT_NS};
pub use medium::{broadcast, busy_ratio, BusyTracker, Finished, Medium, Transmission, TxId};
pub use propagation::{free_space_loss_db, two_ray_loss_db};
pub use zop::{in_zop, ZopParams};

/// Physical-layer constants shared by every vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConstants {
    pub lambda_m: f64,
    pub h_t: f64,
    pub h_r: f64,
    pub epsilon_ground: f64,
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub tx_range_m: f64,
}

impl Default for RadioConstants {
    fn default() -> Self {
        Self {
            lambda_m: 0.051,
            h_t: 1.495,
            h_r: 1.495,
            epsilon_ground: 1.02,
            tx_power_dbm: 13.01,
            rx_sensitivity_dbm: -82.0,
            tx_range_m: 287.0,
        }
    }
}

/// WAVE-style channel split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// Beacons only.
    Control,
    /// Knowledge, route announcements and aggregate forwards.
    Service,
}

/// Per-receiver fate of a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Collided,
    BelowRange,
}

/// Payload size model in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadSizes {
    pub beacon_base: u64,
    pub beacon_per_neighbor: u64,
    pub beacon_per_report: u64,
    pub knowledge_base: u64,
    pub knowledge_per_segment: u64,
    pub route_info_base: u64,
    pub route_info_per_edge: u64,
}

impl Default for PayloadSizes {
    fn default() -> Self {
        Self {
            beacon_base: 3200,
            beacon_per_neighbor: 32,
            beacon_per_report: 64,
            knowledge_base: 1024,
            knowledge_per_segment: 64,
            route_info_base: 512,
            route_info_per_edge: 32,
        }
    }
}

/// Airtime of `bits` at `bitrate_bps`, rounded up to whole nanoseconds.
pub fn airtime_ns(bits: u64, bitrate_bps: f64) -> u64 {
    ((bits as f64 / bitrate_bps) * 1e9).ceil().max(1.0) as u64
}

pub(crate) fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
