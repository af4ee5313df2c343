//! Time-ordered event queue with deterministic tie-breaking.
//!
//! Events at equal timestamps are processed in insertion order (sequence
//! number), so a run is a pure function of the scenario and seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A traffic profile emits one request.
    Arrival { profile: usize },
    /// An on/off profile enters a new phase and pre-generates its arrivals.
    PhaseStart { profile: usize, on: bool },
    /// The earliest fluid transfer on a link may have drained.
    TransferDue { link: usize, version: u64 },
    /// A request reached its segment after link traversal.
    NodeArrival { request: u64 },
    /// A node finished serving a request.
    ServiceDone { node: usize, request: u64 },
    /// Client re-send check for an original request, k-th duplicate.
    DupCheck { original: u64, k: u32 },
    /// Control loop boundary.
    ControlEpoch { index: u64 },
}

#[derive(Debug)]
struct Entry {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest (time, seq).
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, event: Event) {
        debug_assert!(time.is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { time, seq, event });
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|e| (e.time, e.event))
    }
}
