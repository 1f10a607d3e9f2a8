//! Event queue with a fixed total order.
//!
//! Events are ordered by `(time, kind rank, subject, partner, insertion)`.
//! Kind rank follows declaration order of [`EventKind`]: departures first,
//! then arrivals, announces, expiry sweeps, PEX gossip, tracker re-contact.

use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};

use crate::{PeerIndex, Seconds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    PeerDeparts,
    PeerArrives,
    AnnounceDue,
    TrackerExpirySweep,
    /// Gossip on the edge `(subject, partner)` created with id `edge`.
    PexGossipDue { partner: PeerIndex, edge: u64 },
    RecontactEligible,
}

impl EventKind {
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::PeerDeparts => 0,
            EventKind::PeerArrives => 1,
            EventKind::AnnounceDue => 2,
            EventKind::TrackerExpirySweep => 3,
            EventKind::PexGossipDue { .. } => 4,
            EventKind::RecontactEligible => 5,
        }
    }

    fn partner_key(&self) -> (PeerIndex, u64) {
        match *self {
            EventKind::PexGossipDue { partner, edge } => (partner, edge),
            _ => (0, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: Seconds,
    pub kind: EventKind,
    pub subject: PeerIndex,
}

#[derive(Debug)]
struct Queued {
    event: Event,
    seq: u64,
}

impl Queued {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.event
            .time
            .total_cmp(&other.event.time)
            .then(self.event.kind.rank().cmp(&other.event.kind.rank()))
            .then(self.event.subject.cmp(&other.event.subject))
            .then(self.event.kind.partner_key().cmp(&other.event.kind.partner_key()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        assert!(
            event.time.is_finite() && event.time >= 0.0,
            "event time must be finite and non-negative: {event:?}"
        );
        self.seq += 1;
        self.heap.push(Reverse(Queued {
            event,
            seq: self.seq,
        }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(q)| q.event)
    }

    pub fn peek_time(&self) -> Option<Seconds> {
        self.heap.peek().map(|Reverse(q)| q.event.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
