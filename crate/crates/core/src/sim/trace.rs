use std::fmt::Write as _;

use super::queue::{Event, EventKind};
use crate::error::{Error, Result};
use crate::time::SimTime;

/// One dispatched event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl From<&Event> for TraceEntry {
    fn from(e: &Event) -> Self {
        Self {
            time: e.time,
            seq: e.seq,
            kind: e.kind,
        }
    }
}

/// One `time_ns seq kind [args]` line per entry.
pub fn trace_to_text(trace: &[TraceEntry]) -> String {
    let mut s = String::new();
    for t in trace {
        let _ = writeln!(s, "{} {} {}", t.time.0, t.seq, t.kind);
    }
    s
}

pub fn parse_trace(text: &str, source_name: &str) -> Result<Vec<TraceEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::parse(source_name, i + 1, msg);
        let mut parts = line.splitn(3, ' ');
        let time = parts.next().and_then(|x| x.parse().ok()).ok_or_else(|| err("invalid time"))?;
        let seq = parts.next().and_then(|x| x.parse().ok()).ok_or_else(|| err("invalid sequence"))?;
        let kind: EventKind = parts
            .next()
            .ok_or_else(|| err("missing event kind"))?
            .parse()
            .map_err(|e: Error| err(&e.to_string()))?;
        out.push(TraceEntry {
            time: SimTime(time),
            seq,
            kind,
        });
    }
    Ok(out)
}

/// Compares dispatched events against a recorded trace.
#[derive(Debug)]
pub(crate) struct TraceChecker {
    expected: Vec<TraceEntry>,
    next: usize,
}

impl TraceChecker {
    pub(crate) fn new(expected: Vec<TraceEntry>) -> Self {
        Self { expected, next: 0 }
    }

    pub(crate) fn check(&mut self, got: TraceEntry) -> Result<()> {
        let index = self.next;
        let Some(want) = self.expected.get(index) else {
            return Err(Error::TraceMismatch {
                index,
                msg: format!("unexpected extra event `{}`", got.kind),
            });
        };
        if *want != got {
            return Err(Error::TraceMismatch {
                index,
                msg: format!(
                    "expected `{} {} {}`, got `{} {} {}`",
                    want.time.0, want.seq, want.kind, got.time.0, got.seq, got.kind
                ),
            });
        }
        self.next += 1;
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.next != self.expected.len() {
            return Err(Error::TraceMismatch {
                index: self.next,
                msg: format!("{} recorded events never happened", self.expected.len() - self.next),
            });
        }
        Ok(())
    }
}
