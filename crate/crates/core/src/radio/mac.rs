use std::collections::VecDeque;

use rand::Rng;

/// Backoff slot length (13 µs).
pub const SLOT_NS: u64 = 13_000;
/// Backoff draws are uniform over `0..=BACKOFF_SLOTS`.
pub const BACKOFF_SLOTS: u32 = 15;
/// Payloads beyond this many pending are dropped.
pub const MAC_QUEUE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacState {
    #[default]
    Idle,
    /// Waiting for a backoff timer to expire.
    Contending,
    Transmitting,
}

/// What happened to an enqueued payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueued {
    /// The MAC was idle; the caller must schedule a contention attempt.
    StartContention,
    /// Queued behind earlier payloads.
    Queued,
    /// Queue full.
    Dropped,
}

/// One vehicle's broadcast queue on one channel. At most one frame is in
/// flight at a time.
#[derive(Debug, Clone)]
pub struct Mac<P> {
    queue: VecDeque<P>,
    pub state: MacState,
}

impl<P> Default for Mac<P> {
    fn default() -> Self {
        Self {
            queue: VecDeque::new(),
            state: MacState::Idle,
        }
    }
}

impl<P> Mac<P> {
    pub fn enqueue(&mut self, payload: P) -> Enqueued {
        if self.queue.len() >= MAC_QUEUE_LIMIT {
            return Enqueued::Dropped;
        }
        self.queue.push_back(payload);
        if self.state == MacState::Idle {
            self.state = MacState::Contending;
            Enqueued::StartContention
        } else {
            Enqueued::Queued
        }
    }

    /// Pops the head frame and marks the MAC as transmitting.
    pub fn begin_transmission(&mut self) -> Option<P> {
        let p = self.queue.pop_front()?;
        self.state = MacState::Transmitting;
        Some(p)
    }

    /// Called when the in-flight frame ends. Returns true when another frame
    /// is waiting and a new contention must be scheduled.
    pub fn transmission_done(&mut self) -> bool {
        if self.queue.is_empty() {
            self.state = MacState::Idle;
            false
        } else {
            self.state = MacState::Contending;
            true
        }
    }

    /// Drops queued frames matching `pred`; returns how many were removed.
    pub fn cancel_where(&mut self, pred: impl Fn(&P) -> bool) -> usize {
        let before = self.queue.len();
        self.queue.retain(|p| !pred(p));
        before - self.queue.len()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

/// Uniform backoff in slots.
pub fn backoff_slots<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    rng.gen_range(0..=BACKOFF_SLOTS)
}
