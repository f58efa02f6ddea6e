use std::collections::{BTreeMap, HashMap, HashSet};

use super::{distance, Channel, Outcome};
use crate::ids::VehicleId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

/// A broadcast on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission<P> {
    pub sender: VehicleId,
    pub channel: Channel,
    pub start: SimTime,
    pub duration_ns: u64,
    pub payload: P,
}

impl<P> Transmission<P> {
    pub fn end(&self) -> SimTime {
        self.start + SimTime(self.duration_ns)
    }
}

struct InFlight<P> {
    tx: Transmission<P>,
    receivers: Vec<VehicleId>,
    collided: HashSet<VehicleId>,
}

/// A transmission that left the air, with each receiver's outcome.
#[derive(Debug)]
pub struct Finished<P> {
    pub tx: Transmission<P>,
    /// Receivers in ascending id order.
    pub outcomes: Vec<(VehicleId, Outcome)>,
}

/// Union-of-intervals busy accounting for one vehicle.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BusyTracker {
    active: u32,
    since: SimTime,
    total_ns: u64,
}

impl BusyTracker {
    pub fn begin(&mut self, now: SimTime) {
        if self.active == 0 {
            self.since = now;
        }
        self.active += 1;
    }

    pub fn end(&mut self, now: SimTime) {
        debug_assert!(self.active > 0);
        self.active = self.active.saturating_sub(1);
        if self.active == 0 {
            self.total_ns += (now - self.since).0;
        }
    }

    /// Busy seconds accumulated up to `now`, counting an open interval.
    pub fn busy_secs(&self, now: SimTime) -> f64 {
        let open = if self.active > 0 { now.saturating_sub(self.since).0 } else { 0 };
        (self.total_ns + open) as f64 * 1e-9
    }
}

/// Shared medium. Receivers are fixed when a transmission starts; a receiver
/// loses every transmission on a channel that overlaps another one it hears
/// on the same channel.
pub struct Medium<P> {
    next_id: u64,
    inflight: BTreeMap<TxId, InFlight<P>>,
    incoming: HashMap<(VehicleId, Channel), Vec<TxId>>,
    busy: HashMap<VehicleId, BusyTracker>,
    collided_receptions: u64,
}

impl<P> Default for Medium<P> {
    fn default() -> Self {
        Self {
            next_id: 0,
            inflight: BTreeMap::new(),
            incoming: HashMap::new(),
            busy: HashMap::new(),
            collided_receptions: 0,
        }
    }
}

impl<P> Medium<P> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Puts `tx` on the air towards `receivers` (the sender is skipped if
    /// listed).
    pub fn start(&mut self, tx: Transmission<P>, receivers: Vec<VehicleId>) -> TxId {
        let id = TxId(self.next_id);
        self.next_id += 1;
        let mut receivers: Vec<VehicleId> = receivers.into_iter().filter(|r| *r != tx.sender).collect();
        receivers.sort_unstable();
        receivers.dedup();
        let mut collided = HashSet::new();
        for r in &receivers {
            let list = self.incoming.entry((*r, tx.channel)).or_default();
            if !list.is_empty() {
                collided.insert(*r);
                for other in list.iter() {
                    if let Some(o) = self.inflight.get_mut(other) {
                        o.collided.insert(*r);
                    }
                }
            }
            list.push(id);
        }
        if tx.channel == Channel::Control {
            self.busy.entry(tx.sender).or_default().begin(tx.start);
            for r in &receivers {
                self.busy.entry(*r).or_default().begin(tx.start);
            }
        }
        self.inflight.insert(id, InFlight { tx, receivers, collided });
        id
    }

    /// Takes `id` off the air.
    pub fn finish(&mut self, id: TxId) -> Option<Finished<P>> {
        let f = self.inflight.remove(&id)?;
        let end = f.tx.end();
        let mut outcomes = Vec::with_capacity(f.receivers.len());
        for r in &f.receivers {
            if let Some(list) = self.incoming.get_mut(&(*r, f.tx.channel)) {
                list.retain(|t| *t != id);
            }
            let outcome = if f.collided.contains(r) {
                self.collided_receptions += 1;
                Outcome::Collided
            } else {
                Outcome::Delivered
            };
            outcomes.push((*r, outcome));
        }
        if f.tx.channel == Channel::Control {
            if let Some(b) = self.busy.get_mut(&f.tx.sender) {
                b.end(end);
            }
            for r in &f.receivers {
                if let Some(b) = self.busy.get_mut(r) {
                    b.end(end);
                }
            }
        }
        Some(Finished { tx: f.tx, outcomes })
    }

    /// Carrier sense: a transmission started strictly before `now` is audible.
    pub fn sensed_busy(&self, v: VehicleId, channel: Channel, now: SimTime) -> bool {
        self.incoming
            .get(&(v, channel))
            .is_some_and(|l| l.iter().any(|t| self.inflight.get(t).is_some_and(|f| f.tx.start < now)))
    }

    /// Earliest time at which everything `v` currently hears has ended.
    pub fn idle_at(&self, v: VehicleId, channel: Channel) -> SimTime {
        self.incoming
            .get(&(v, channel))
            .into_iter()
            .flatten()
            .filter_map(|t| self.inflight.get(t).map(|f| f.tx.end()))
            .max()
            .unwrap_or(SimTime::ZERO)
    }

    pub fn end_of(&self, id: TxId) -> Option<SimTime> {
        self.inflight.get(&id).map(|f| f.tx.end())
    }

    /// Control-channel busy seconds observed by `v` up to `now`.
    pub fn busy_secs(&self, v: VehicleId, now: SimTime) -> f64 {
        self.busy.get(&v).map_or(0.0, |b| b.busy_secs(now))
    }

    pub fn collided_receptions(&self) -> u64 {
        self.collided_receptions
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }
}

/// Outcome of `tx` at every vehicle of the snapshot other than its sender,
/// given the other transmissions that share the air. Receivers are the
/// vehicles within `range_m` of their sender at the snapshot.
pub fn broadcast<P: Clone>(
    tx: &Transmission<P>,
    positions: &[(VehicleId, (f64, f64))],
    others: &[Transmission<P>],
    range_m: f64,
) -> Vec<(VehicleId, Outcome)> {
    let pos: HashMap<VehicleId, (f64, f64)> = positions.iter().copied().collect();
    let in_range = |sender: VehicleId| -> Vec<VehicleId> {
        let Some(&sp) = pos.get(&sender) else { return Vec::new() };
        positions
            .iter()
            .filter(|(id, p)| *id != sender && distance(sp, *p) <= range_m)
            .map(|(id, _)| *id)
            .collect()
    };

    // Replay starts and ends in time order; an end at the same instant as a
    // start is processed first, so back-to-back frames do not overlap.
    let all: Vec<&Transmission<P>> = std::iter::once(tx).chain(others.iter()).collect();
    let mut events: Vec<(SimTime, u8, usize)> = Vec::new();
    for (i, t) in all.iter().enumerate() {
        events.push((t.start, 1, i));
        events.push((t.end(), 0, i));
    }
    events.sort();
    let mut medium = Medium::new();
    let mut ids = vec![None; all.len()];
    let mut result = Vec::new();
    for (_, kind, i) in events {
        if kind == 1 {
            ids[i] = Some(medium.start(all[i].clone(), in_range(all[i].sender)));
        } else if let Some(id) = ids[i] {
            let f = medium.finish(id).expect("started");
            if i == 0 {
                result = f.outcomes;
            }
        }
    }
    let heard: HashSet<VehicleId> = result.iter().map(|(v, _)| *v).collect();
    for (id, _) in positions {
        if *id != tx.sender && !heard.contains(id) {
            result.push((*id, Outcome::BelowRange));
        }
    }
    result.sort_by_key(|(v, _)| *v);
    result
}

/// Fraction of `[window_start, window_end)` covered by the union of
/// `intervals`.
pub fn busy_ratio(intervals: &[(f64, f64)], window_start: f64, window_end: f64) -> f64 {
    let len = window_end - window_start;
    if !(len > 0.0) {
        return 0.0;
    }
    let mut clipped: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(a, b)| (a.max(window_start), b.min(window_end)))
        .filter(|(a, b)| b > a)
        .collect();
    clipped.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in clipped {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                covered += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        covered += cb - ca;
    }
    (covered / len).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(sender: u32, start_us: u64, dur_us: u64) -> Transmission<()> {
        Transmission {
            sender: VehicleId(sender),
            channel: Channel::Control,
            start: SimTime(start_us * 1000),
            duration_ns: dur_us * 1000,
            payload: (),
        }
    }

    #[test]
    fn single_neighbor_delivered() {
        let pos = [(VehicleId(0), (0.0, 0.0)), (VehicleId(1), (100.0, 0.0))];
        let out = broadcast(&tx(0, 0, 500), &pos, &[], 287.0);
        assert_eq!(out, vec![(VehicleId(1), Outcome::Delivered)]);
    }

    #[test]
    fn far_neighbor_below_range() {
        let pos = [(VehicleId(0), (0.0, 0.0)), (VehicleId(1), (300.0, 0.0))];
        let out = broadcast(&tx(0, 0, 500), &pos, &[], 287.0);
        assert_eq!(out, vec![(VehicleId(1), Outcome::BelowRange)]);
    }

    #[test]
    fn overlap_collides_at_common_neighbor() {
        // 0 and 2 cannot hear each other; 1 hears both.
        let pos = [
            (VehicleId(0), (0.0, 0.0)),
            (VehicleId(1), (200.0, 0.0)),
            (VehicleId(2), (400.0, 0.0)),
        ];
        let out = broadcast(&tx(0, 0, 500), &pos, &[tx(2, 100, 500)], 287.0);
        assert_eq!(out[0], (VehicleId(1), Outcome::Collided));
        assert_eq!(out[1], (VehicleId(2), Outcome::BelowRange));
    }

    #[test]
    fn back_to_back_frames_do_not_collide() {
        let pos = [(VehicleId(0), (0.0, 0.0)), (VehicleId(1), (10.0, 0.0)), (VehicleId(2), (20.0, 0.0))];
        let out = broadcast(&tx(0, 0, 500), &pos, &[tx(2, 500, 500)], 287.0);
        assert_eq!(out[0], (VehicleId(1), Outcome::Delivered));
    }

    #[test]
    fn sender_never_receives_itself() {
        let mut m: Medium<()> = Medium::new();
        let id = m.start(tx(0, 0, 10), vec![VehicleId(0), VehicleId(1)]);
        let f = m.finish(id).unwrap();
        assert_eq!(f.outcomes, vec![(VehicleId(1), Outcome::Delivered)]);
    }

    #[test]
    fn carrier_sense_ignores_same_instant_starts() {
        let mut m: Medium<()> = Medium::new();
        m.start(tx(0, 10, 100), vec![VehicleId(1)]);
        assert!(!m.sensed_busy(VehicleId(1), Channel::Control, SimTime(10_000)));
        assert!(m.sensed_busy(VehicleId(1), Channel::Control, SimTime(10_001)));
        assert!(!m.sensed_busy(VehicleId(1), Channel::Service, SimTime(10_001)));
        assert_eq!(m.idle_at(VehicleId(1), Channel::Control), SimTime(110_000));
    }

    #[test]
    fn busy_ratio_union_semantics() {
        assert_eq!(busy_ratio(&[], 0.0, 1.0), 0.0);
        assert!((busy_ratio(&[(0.2, 0.201)], 0.0, 1.0) - 0.001).abs() < 1e-12);
        assert!((busy_ratio(&[(0.2, 0.201), (0.2, 0.201)], 0.0, 1.0) - 0.001).abs() < 1e-12);
        assert!((busy_ratio(&[(0.0, 0.6), (0.5, 2.0)], 0.0, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tracker_counts_overlap_once() {
        let mut m: Medium<()> = Medium::new();
        let a = m.start(tx(0, 0, 1000), vec![VehicleId(1)]);
        let b = m.start(tx(2, 0, 1000), vec![VehicleId(1)]);
        m.finish(a);
        m.finish(b);
        let busy = m.busy_secs(VehicleId(1), SimTime::from_secs(1.0));
        assert!((busy - 0.001).abs() < 1e-12);
        assert_eq!(m.collided_receptions(), 2);
    }
}
