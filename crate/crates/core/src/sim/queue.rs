use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::ids::VehicleId;
use crate::knowledge::KnowledgeId;
use crate::radio::{Channel, TxId};
use crate::time::SimTime;

/// Protocol timers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timer {
    /// Zone-of-preference rebroadcast of a knowledge message.
    Relay { vehicle: VehicleId, knowledge: KnowledgeId },
    /// End of the route-announcement collection window.
    RerouteWait { vehicle: VehicleId, episode: KnowledgeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    MobilityTick,
    BeaconDue(VehicleId),
    /// A MAC access attempt; transmits unless the channel is sensed busy.
    TransmissionStart { vehicle: VehicleId, channel: Channel },
    TransmissionEnd(TxId),
    TimerExpired(Timer),
    VehicleArrival(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, seq)
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events, dispatched in `(time, seq)` order. Sequence numbers are
/// assigned at insertion and never reused.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `kind` at `time`, which is clamped to the current clock.
    pub fn push(&mut self, time: SimTime, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            time: time.max(self.now),
            seq,
            kind,
        });
        seq
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        let e = self.heap.pop()?;
        debug_assert!(e.time >= self.now);
        self.now = e.time;
        Some(e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

fn channel_str(c: Channel) -> &'static str {
    match c {
        Channel::Control => "control",
        Channel::Service => "service",
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::MobilityTick => write!(f, "tick"),
            EventKind::BeaconDue(v) => write!(f, "beacon {v}"),
            EventKind::TransmissionStart { vehicle, channel } => {
                write!(f, "txstart {vehicle} {}", channel_str(*channel))
            }
            EventKind::TransmissionEnd(id) => write!(f, "txend {}", id.0),
            EventKind::TimerExpired(Timer::Relay { vehicle, knowledge }) => write!(f, "relay {vehicle} {knowledge}"),
            EventKind::TimerExpired(Timer::RerouteWait { vehicle, episode }) => {
                write!(f, "reroute {vehicle} {episode}")
            }
            EventKind::VehicleArrival(v) => write!(f, "arrive {v}"),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Config(format!("unrecognized event `{s}`"));
        let f: Vec<&str> = s.split_whitespace().collect();
        let n = |i: usize| -> Result<u64, Error> { f.get(i).and_then(|x| x.parse().ok()).ok_or_else(bad) };
        let v = |i: usize| -> Result<VehicleId, Error> { Ok(VehicleId(n(i)? as u32)) };
        Ok(match f.first().copied() {
            Some("tick") => EventKind::MobilityTick,
            Some("beacon") => EventKind::BeaconDue(v(1)?),
            Some("txstart") => EventKind::TransmissionStart {
                vehicle: v(1)?,
                channel: match f.get(2).copied() {
                    Some("control") => Channel::Control,
                    Some("service") => Channel::Service,
                    _ => return Err(bad()),
                },
            },
            Some("txend") => EventKind::TransmissionEnd(TxId(n(1)?)),
            Some("relay") => EventKind::TimerExpired(Timer::Relay {
                vehicle: v(1)?,
                knowledge: KnowledgeId(n(2)?),
            }),
            Some("reroute") => EventKind::TimerExpired(Timer::RerouteWait {
                vehicle: v(1)?,
                episode: KnowledgeId(n(2)?),
            }),
            Some("arrive") => EventKind::VehicleArrival(v(1)?),
            _ => return Err(bad()),
        })
    }
}
