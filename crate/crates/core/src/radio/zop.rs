use super::distance;

/// Zone-of-preference geometry and rebroadcast delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZopParams {
    /// Inner radius of the zone as a fraction of the range.
    pub rho: f64,
    /// Half-angle of the zone around the propagation direction, degrees.
    pub half_angle_deg: f64,
    pub wait_min_s: f64,
    pub wait_max_s: f64,
    pub wait_long_s: f64,
}

impl Default for ZopParams {
    fn default() -> Self {
        Self {
            rho: 0.8,
            half_angle_deg: 45.0,
            wait_min_s: 0.002,
            wait_max_s: 0.02,
            wait_long_s: 0.1,
        }
    }
}

/// Whether `receiver` lies in the sender's zone of preference, and how long
/// it should wait before rebroadcasting.
///
/// A zero `propagation_dir` (an original transmission) makes the zone a full
/// annulus. Inside the zone the wait falls linearly from `wait_max_s` at the
/// sender towards `wait_min_s` at the range edge; outside it runs from
/// `wait_long_s` down to `wait_max_s`, so every in-zone receiver fires first
/// and farther receivers always wait less.
pub fn in_zop(
    sender_pos: (f64, f64),
    propagation_dir: (f64, f64),
    receiver_pos: (f64, f64),
    range_m: f64,
    p: &ZopParams,
) -> (bool, f64) {
    let d = distance(sender_pos, receiver_pos);
    let closeness = (1.0 - d / range_m).clamp(0.0, 1.0);
    let radial = d >= p.rho * range_m;
    let dir_norm = propagation_dir.0.hypot(propagation_dir.1);
    let angular = if dir_norm == 0.0 || d == 0.0 {
        true
    } else {
        let (dx, dy) = (receiver_pos.0 - sender_pos.0, receiver_pos.1 - sender_pos.1);
        let cos = (dx * propagation_dir.0 + dy * propagation_dir.1) / (d * dir_norm);
        cos >= p.half_angle_deg.to_radians().cos() - 1e-12
    };
    if radial && angular {
        (true, p.wait_min_s + closeness * (p.wait_max_s - p.wait_min_s))
    } else {
        (false, p.wait_max_s + closeness * (p.wait_long_s - p.wait_max_s))
    }
}
