//! Per-peer protocol: candidate lists, sequential connection initiation,
//! the acceptance rule, neighbour-loss repair, tracker re-contact and PEX.
//!
//! [`Torrent`] owns every [`PeerState`] plus the [`Tracker`]; operations that
//! touch two peers (connecting, dropping an edge, gossip) go through it so
//! that both endpoints change in one step. Timers are not scheduled here:
//! they are emitted as [`Followup`]s for the event loop to pick up.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::bitset::BitSet;
use crate::config::ScenarioConfig;
use crate::tracker::{Tracker, TrackerError};
use crate::{PeerIndex, Seconds};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("peer {0} does not exist")]
    UnknownPeer(PeerIndex),
    #[error("peer {0} cannot connect to itself")]
    SelfConnect(PeerIndex),
    #[error("peer {0} is not alive")]
    NotAlive(PeerIndex),
    #[error("peer {0} has already joined")]
    AlreadyJoined(PeerIndex),
    #[error("peers {0} and {1} are already connected")]
    AlreadyConnected(PeerIndex, PeerIndex),
    #[error("peers {0} and {1} are not connected")]
    NotConnected(PeerIndex, PeerIndex),
    #[error("peer {0} has no outgoing connection left")]
    OutgoingExhausted(PeerIndex),
    #[error("peer {0} has a full peer set")]
    PeerSetFull(PeerIndex),
    #[error("PEX is disabled")]
    PexDisabled,
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Where a connection attempt's target came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Via {
    Tracker,
    Pex,
    /// Explicit call to [`Torrent::try_connect`].
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Change {
    Arrive { peer: PeerIndex, nated: bool },
    Depart { peer: PeerIndex },
    Connect { initiator: PeerIndex, target: PeerIndex, via: Via },
    Disconnect { a: PeerIndex, b: PeerIndex },
    TrackerResponse { peer: PeerIndex, peers: Vec<PeerIndex> },
    Expired { peer: PeerIndex },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub t: Seconds,
    pub change: Change,
}

/// Timers requested by protocol operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Followup {
    PexGossip {
        a: PeerIndex,
        b: PeerIndex,
        edge: u64,
        at: Seconds,
    },
    Recontact { peer: PeerIndex, at: Seconds },
}

/// One open connection as seen from one endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub peer: PeerIndex,
    /// This endpoint initiated the connection.
    pub initiated: bool,
    pub edge: u64,
}

#[derive(Clone, Debug)]
pub struct PeerState {
    index: PeerIndex,
    is_nated: bool,
    arrived: bool,
    departed: bool,
    l_tracker: VecDeque<PeerIndex>,
    l_pex: VecDeque<PeerIndex>,
    // l_tracker ∪ l_pex
    candidates: BitSet,
    neighbor_bits: BitSet,
    links: Vec<Link>,
    outgoing_initiated: u32,
    last_tracker_request: Option<Seconds>,
    recontact_pending: bool,
}

impl PeerState {
    fn new(index: PeerIndex, is_nated: bool, capacity: usize) -> Self {
        Self {
            index,
            is_nated,
            arrived: false,
            departed: false,
            l_tracker: VecDeque::new(),
            l_pex: VecDeque::new(),
            candidates: BitSet::with_capacity(capacity),
            neighbor_bits: BitSet::with_capacity(capacity),
            links: Vec::new(),
            outgoing_initiated: 0,
            last_tracker_request: None,
            recontact_pending: false,
        }
    }

    pub fn index(&self) -> PeerIndex {
        self.index
    }

    pub fn is_nated(&self) -> bool {
        self.is_nated
    }

    pub fn is_alive(&self) -> bool {
        self.arrived && !self.departed
    }

    pub fn has_departed(&self) -> bool {
        self.departed
    }

    pub fn degree(&self) -> u32 {
        self.links.len() as u32
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn neighbors(&self) -> impl Iterator<Item = PeerIndex> + '_ {
        self.links.iter().map(|l| l.peer)
    }

    pub fn is_neighbor(&self, k: PeerIndex) -> bool {
        self.neighbor_bits.contains(k as usize)
    }

    pub fn outgoing_initiated(&self) -> u32 {
        self.outgoing_initiated
    }

    pub fn l_tracker(&self) -> &VecDeque<PeerIndex> {
        &self.l_tracker
    }

    pub fn l_pex(&self) -> &VecDeque<PeerIndex> {
        &self.l_pex
    }

    pub fn last_tracker_request(&self) -> Option<Seconds> {
        self.last_tracker_request
    }

    fn link_to(&self, k: PeerIndex) -> Option<&Link> {
        if !self.is_neighbor(k) {
            return None;
        }
        self.links.iter().find(|l| l.peer == k)
    }

    fn forget_candidate(&mut self, k: PeerIndex) {
        if self.candidates.remove(k as usize) {
            self.l_tracker.retain(|&c| c != k);
            self.l_pex.retain(|&c| c != k);
        }
    }
}

/// Per-peer row of the state dump taken at snapshot instants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeerDump {
    pub index: PeerIndex,
    pub nated: bool,
    pub degree: u32,
    pub outgoing_initiated: u32,
    pub l_tracker: u32,
    pub l_pex: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    pub max_peer_set: u32,
    pub max_outgoing: u32,
    pub recontact_threshold: u32,
    pub recontact_min_interval: Seconds,
    pub pex_enabled: bool,
    pub pex_nat_blocks: bool,
}

impl From<&ScenarioConfig> for ProtocolParams {
    fn from(cfg: &ScenarioConfig) -> Self {
        Self {
            max_peer_set: cfg.max_peer_set,
            max_outgoing: cfg.max_outgoing,
            recontact_threshold: cfg.recontact_threshold,
            recontact_min_interval: cfg.recontact_min_interval(),
            pex_enabled: cfg.pex_enabled,
            pex_nat_blocks: cfg.pex_nat_blocks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub peer: PeerIndex,
    pub what: &'static str,
}

/// The peers of one torrent and their tracker.
#[derive(Clone, Debug)]
pub struct Torrent {
    params: ProtocolParams,
    peers: Vec<PeerState>,
    tracker: Tracker,
    capacity: usize,
    next_edge: u64,
    now: Seconds,
    log: Vec<LogEntry>,
    followups: Vec<Followup>,
}

impl Torrent {
    /// `expiry_range` is in seconds; `capacity` sizes per-peer bit sets.
    pub fn new(
        params: ProtocolParams,
        tracker_return_count: u32,
        expiry_range: (Seconds, Seconds),
        capacity: usize,
    ) -> Self {
        Self {
            params,
            peers: Vec::with_capacity(capacity),
            tracker: Tracker::new(tracker_return_count, expiry_range),
            capacity,
            next_edge: 0,
            now: 0.0,
            log: Vec::new(),
            followups: Vec::new(),
        }
    }

    pub fn from_config(cfg: &ScenarioConfig, capacity: usize) -> Self {
        let (lo, hi) = cfg.announce_expiry_mins;
        Self::new(
            ProtocolParams::from(cfg),
            cfg.tracker_return_count,
            (lo * 60.0, hi * 60.0),
            capacity,
        )
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    /// Creates the next peer (not yet arrived) and returns its index.
    pub fn add_peer(&mut self, is_nated: bool) -> PeerIndex {
        let index = self.peers.len() as PeerIndex;
        self.peers
            .push(PeerState::new(index, is_nated, self.capacity));
        index
    }

    pub fn peer(&self, p: PeerIndex) -> &PeerState {
        &self.peers[p as usize]
    }

    pub fn peers(&self) -> &[PeerState] {
        &self.peers
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn tracker_mut(&mut self) -> &mut Tracker {
        &mut self.tracker
    }

    pub fn now(&self) -> Seconds {
        self.now
    }

    pub fn set_now(&mut self, t: Seconds) {
        self.now = t;
    }

    pub fn take_log(&mut self) -> Vec<LogEntry> {
        core::mem::take(&mut self.log)
    }

    pub fn take_followups(&mut self) -> Vec<Followup> {
        core::mem::take(&mut self.followups)
    }

    pub fn dump(&self) -> Vec<PeerDump> {
        self.peers
            .iter()
            .filter(|p| p.is_alive())
            .map(|p| PeerDump {
                index: p.index,
                nated: p.is_nated,
                degree: p.degree(),
                outgoing_initiated: p.outgoing_initiated,
                l_tracker: p.l_tracker.len() as u32,
                l_pex: p.l_pex.len() as u32,
            })
            .collect()
    }

    /// Logs that the tracker dropped `p` for silence.
    pub fn record_expiry(&mut self, p: PeerIndex) {
        self.record(Change::Expired { peer: p });
    }

    fn record(&mut self, change: Change) {
        self.log.push(LogEntry { t: self.now, change });
    }

    fn get(&self, p: PeerIndex) -> Result<&PeerState, ProtocolError> {
        self.peers
            .get(p as usize)
            .ok_or(ProtocolError::UnknownPeer(p))
    }

    fn alive(&self, p: PeerIndex) -> Result<&PeerState, ProtocolError> {
        let peer = self.get(p)?;
        if peer.is_alive() {
            Ok(peer)
        } else {
            Err(ProtocolError::NotAlive(p))
        }
    }

    /// A newly arrived peer asks the tracker for peers, registers, and
    /// starts initiating connections.
    pub fn join<R: Rng + ?Sized>(
        &mut self,
        p: PeerIndex,
        t: Seconds,
        rng: &mut R,
    ) -> Result<(), ProtocolError> {
        self.now = t;
        let peer = self.get(p)?;
        if peer.arrived {
            return Err(ProtocolError::AlreadyJoined(p));
        }
        let nated = peer.is_nated;
        self.peers[p as usize].arrived = true;
        self.record(Change::Arrive { peer: p, nated });
        // the response is drawn before the newcomer enters the lists
        let response = self.tracker.request_peers(p, rng);
        self.tracker.register_peer(p, nated, t, rng)?;
        self.absorb_tracker_response(p, response);
        self.fill_connections(p);
        if self.peers[p as usize].degree() < self.params.recontact_threshold {
            self.schedule_recontact(p, t + self.params.recontact_min_interval);
        }
        Ok(())
    }

    fn absorb_tracker_response(&mut self, p: PeerIndex, response: Vec<PeerIndex>) {
        let peer = &mut self.peers[p as usize];
        peer.last_tracker_request = Some(self.now);
        for &k in &response {
            if k != p && !peer.is_neighbor(k) && peer.candidates.insert(k as usize) {
                peer.l_tracker.push_back(k);
            }
        }
        self.record(Change::TrackerResponse {
            peer: p,
            peers: response,
        });
    }

    /// One connection attempt. `Ok(true)` if `target` accepted.
    ///
    /// Refusal leaves both peers unchanged. Calling this while the
    /// initiator has no budget left, or on an existing edge, is an error.
    pub fn try_connect(&mut self, initiator: PeerIndex, target: PeerIndex) -> Result<bool, ProtocolError> {
        if initiator == target {
            return Err(ProtocolError::SelfConnect(initiator));
        }
        let i = self.alive(initiator)?;
        self.alive(target)?;
        if i.is_neighbor(target) {
            return Err(ProtocolError::AlreadyConnected(initiator, target));
        }
        if i.outgoing_initiated >= self.params.max_outgoing {
            return Err(ProtocolError::OutgoingExhausted(initiator));
        }
        if i.degree() >= self.params.max_peer_set {
            return Err(ProtocolError::PeerSetFull(initiator));
        }
        self.peers[initiator as usize].forget_candidate(target);
        Ok(self.attempt(initiator, target, Via::Direct))
    }

    fn attempt(&mut self, initiator: PeerIndex, target: PeerIndex, via: Via) -> bool {
        let t = &self.peers[target as usize];
        let nat_applies = via != Via::Pex || self.params.pex_nat_blocks;
        if (t.is_nated && nat_applies) || t.degree() >= self.params.max_peer_set {
            return false;
        }
        let edge = self.next_edge;
        self.next_edge += 1;
        for (me, other, initiated) in [(initiator, target, true), (target, initiator, false)] {
            let peer = &mut self.peers[me as usize];
            peer.forget_candidate(other);
            peer.neighbor_bits.insert(other as usize);
            peer.links.push(Link {
                peer: other,
                initiated,
                edge,
            });
        }
        self.peers[initiator as usize].outgoing_initiated += 1;
        self.record(Change::Connect {
            initiator,
            target,
            via,
        });
        if self.params.pex_enabled {
            self.followups.push(Followup::PexGossip {
                a: initiator,
                b: target,
                edge,
                at: self.now,
            });
        }
        true
    }

    /// Consumes candidates front to back, tracker-discovered ones first,
    /// until the outgoing budget or the peer set is full or no candidate is
    /// left. Every consumed candidate is dropped whether or not it accepted.
    pub fn fill_connections(&mut self, p: PeerIndex) {
        loop {
            let peer = &mut self.peers[p as usize];
            if !peer.is_alive()
                || peer.outgoing_initiated >= self.params.max_outgoing
                || peer.degree() >= self.params.max_peer_set
            {
                return;
            }
            let (target, via) = if let Some(k) = peer.l_tracker.pop_front() {
                (k, Via::Tracker)
            } else if let Some(k) = peer.l_pex.pop_front() {
                (k, Via::Pex)
            } else {
                return;
            };
            peer.candidates.remove(target as usize);
            if !self.peers[target as usize].is_alive() || self.peers[p as usize].is_neighbor(target) {
                continue;
            }
            self.attempt(p, target, via);
        }
    }

    fn drop_edge(&mut self, a: PeerIndex, b: PeerIndex) -> Result<Link, ProtocolError> {
        let pos = self.peers[a as usize]
            .links
            .iter()
            .position(|l| l.peer == b)
            .ok_or(ProtocolError::NotConnected(a, b))?;
        let link = self.peers[a as usize].links.swap_remove(pos);
        self.peers[a as usize].neighbor_bits.remove(b as usize);
        let other = &mut self.peers[b as usize];
        let back = other
            .links
            .iter()
            .position(|l| l.peer == a)
            .expect("edges are symmetric");
        other.links.swap_remove(back);
        other.neighbor_bits.remove(a as usize);
        let initiator = if link.initiated { a } else { b };
        self.peers[initiator as usize].outgoing_initiated -= 1;
        self.record(Change::Disconnect { a, b });
        Ok(link)
    }

    /// `peer` loses its connection to `departed` and tries to repair.
    pub fn handle_neighbor_departure<R: Rng + ?Sized>(
        &mut self,
        peer: PeerIndex,
        departed: PeerIndex,
        t: Seconds,
        rng: &mut R,
    ) -> Result<(), ProtocolError> {
        self.now = t;
        self.drop_edge(peer, departed)?;
        if self.peers[peer as usize].outgoing_initiated < self.params.max_outgoing {
            self.fill_connections(peer);
        }
        self.maybe_recontact_tracker(peer, t, rng);
        Ok(())
    }

    /// Peer `p` leaves: the tracker forgets it and every neighbour repairs,
    /// in index order.
    pub fn depart<R: Rng + ?Sized>(&mut self, p: PeerIndex, t: Seconds, rng: &mut R) -> Result<(), ProtocolError> {
        self.now = t;
        self.alive(p)?;
        let peer = &mut self.peers[p as usize];
        peer.departed = true;
        peer.l_tracker.clear();
        peer.l_pex.clear();
        peer.candidates = BitSet::default();
        let mut neighbors: Vec<PeerIndex> = peer.neighbors().collect();
        neighbors.sort_unstable();
        if self.tracker.is_registered(p) {
            self.tracker.deregister(p)?;
        }
        self.record(Change::Depart { peer: p });
        for q in neighbors {
            self.handle_neighbor_departure(q, p, t, rng)?;
        }
        Ok(())
    }

    /// Asks the tracker for more peers when the peer set is below the
    /// re-contact threshold and the minimum interval since the previous
    /// request has elapsed. Schedules a retry otherwise.
    pub fn maybe_recontact_tracker<R: Rng + ?Sized>(&mut self, p: PeerIndex, t: Seconds, rng: &mut R) -> bool {
        self.now = t;
        let peer = &self.peers[p as usize];
        if !peer.is_alive() || peer.degree() >= self.params.recontact_threshold {
            return false;
        }
        let interval = self.params.recontact_min_interval;
        if let Some(last) = peer.last_tracker_request {
            if t < last + interval {
                self.schedule_recontact(p, last + interval);
                return false;
            }
        }
        let response = self.tracker.request_peers(p, rng);
        self.absorb_tracker_response(p, response);
        self.fill_connections(p);
        if self.peers[p as usize].degree() < self.params.recontact_threshold {
            self.schedule_recontact(p, t + interval);
        }
        true
    }

    fn schedule_recontact(&mut self, p: PeerIndex, at: Seconds) {
        let peer = &mut self.peers[p as usize];
        if !peer.recontact_pending {
            peer.recontact_pending = true;
            self.followups.push(Followup::Recontact { peer: p, at });
        }
    }

    /// Fires a re-contact timer scheduled through [`Followup::Recontact`].
    pub fn on_recontact_due<R: Rng + ?Sized>(&mut self, p: PeerIndex, t: Seconds, rng: &mut R) -> bool {
        self.peers[p as usize].recontact_pending = false;
        self.maybe_recontact_tracker(p, t, rng)
    }

    /// Whether a PEX-advertised `k` is new to `p`.
    pub fn pex_candidate_filter(&self, p: PeerIndex, k: PeerIndex) -> bool {
        let peer = &self.peers[p as usize];
        k != p && !peer.is_neighbor(k) && !peer.candidates.contains(k as usize)
    }

    /// Both neighbours send each other their neighbour lists, keep the
    /// unknown entries in `l_pex`, then open connections if they have room.
    pub fn pex_exchange(&mut self, a: PeerIndex, b: PeerIndex, t: Seconds) -> Result<(), ProtocolError> {
        if !self.params.pex_enabled {
            return Err(ProtocolError::PexDisabled);
        }
        self.now = t;
        if !self.alive(a)?.is_neighbor(b) {
            return Err(ProtocolError::NotConnected(a, b));
        }
        self.alive(b)?;
        let from_a: Vec<PeerIndex> = self.peers[a as usize].neighbors().collect();
        let from_b: Vec<PeerIndex> = self.peers[b as usize].neighbors().collect();
        self.learn_from_pex(a, &from_b);
        self.learn_from_pex(b, &from_a);
        self.fill_connections(a);
        self.fill_connections(b);
        Ok(())
    }

    fn learn_from_pex(&mut self, p: PeerIndex, advertised: &[PeerIndex]) {
        for &k in advertised {
            if self.pex_candidate_filter(p, k) {
                let peer = &mut self.peers[p as usize];
                peer.candidates.insert(k as usize);
                peer.l_pex.push_back(k);
            }
        }
    }

    /// Fires a gossip timer; returns `false` if the edge it belongs to is gone.
    pub fn on_pex_due(&mut self, a: PeerIndex, b: PeerIndex, edge: u64, t: Seconds) -> bool {
        let current = self.peers[a as usize]
            .link_to(b)
            .is_some_and(|l| l.edge == edge);
        if !current || !self.peers[a as usize].is_alive() || !self.peers[b as usize].is_alive() {
            return false;
        }
        self.pex_exchange(a, b, t).expect("live edge");
        true
    }

    /// Global consistency sweep, used by tests.
    pub fn check_invariants(&self) -> Result<(), Violation> {
        let fail = |peer: &PeerState, what| {
            Err(Violation {
                peer: peer.index,
                what,
            })
        };
        for peer in &self.peers {
            if peer.degree() > self.params.max_peer_set {
                return fail(peer, "peer set above maximum");
            }
            if peer.outgoing_initiated > self.params.max_outgoing {
                return fail(peer, "outgoing connections above maximum");
            }
            let initiated = peer.links.iter().filter(|l| l.initiated).count() as u32;
            if initiated != peer.outgoing_initiated {
                return fail(peer, "outgoing counter out of sync");
            }
            if !peer.is_alive() && !peer.links.is_empty() {
                return fail(peer, "departed or unarrived peer holds connections");
            }
            if peer.neighbor_bits.len() != peer.links.len() {
                return fail(peer, "neighbour bits out of sync");
            }
            if peer.candidates.len() != peer.l_tracker.len() + peer.l_pex.len() {
                return fail(peer, "candidate bits out of sync");
            }
            if peer.candidates.contains(peer.index as usize) || peer.is_neighbor(peer.index) {
                return fail(peer, "peer knows itself");
            }
            for link in &peer.links {
                let other = &self.peers[link.peer as usize];
                if !other.is_alive() {
                    return fail(peer, "edge to a departed peer");
                }
                match other.link_to(peer.index) {
                    Some(back) if back.edge == link.edge && back.initiated != link.initiated => {}
                    _ => return fail(peer, "asymmetric edge"),
                }
            }
            if self.tracker.is_registered(peer.index) && !peer.is_alive() {
                return fail(peer, "departed peer still registered");
            }
        }
        self.tracker.check_invariants().map_err(|what| Violation {
            peer: PeerIndex::MAX,
            what,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn params(max_peer_set: u32, max_outgoing: u32, pex: bool) -> ProtocolParams {
        ProtocolParams {
            max_peer_set,
            max_outgoing,
            recontact_threshold: max_peer_set.clamp(1, 20),
            recontact_min_interval: 300.0,
            pex_enabled: pex,
            pex_nat_blocks: true,
        }
    }

    fn torrent(max_peer_set: u32, max_outgoing: u32, return_count: u32, pex: bool) -> Torrent {
        Torrent::new(
            params(max_peer_set, max_outgoing, pex),
            return_count,
            (1800.0, 2700.0),
            64,
        )
    }

    #[test]
    fn first_peer_has_nothing_to_connect_to() {
        let mut t = torrent(80, 40, 50, false);
        let mut rng = stream_rng(1, Stream::Tracker);
        let p = t.add_peer(false);
        t.join(p, 0.0, &mut rng).unwrap();
        assert!(t.peer(p).l_tracker().is_empty());
        assert_eq!(t.peer(p).degree(), 0);
        assert_eq!(t.join(p, 1.0, &mut rng), Err(ProtocolError::AlreadyJoined(p)));
    }

    #[test]
    fn twenty_fifth_peer_connects_to_all_24() {
        let mut t = torrent(80, 40, 50, false);
        let mut rng = stream_rng(2, Stream::Tracker);
        for i in 0..25 {
            let p = t.add_peer(false);
            t.join(p, f64::from(i), &mut rng).unwrap();
        }
        assert_eq!(t.peer(24).degree(), 24);
        assert_eq!(t.peer(24).outgoing_initiated(), 24);
        // everybody is connected to everybody
        assert!(t.peers().iter().all(|p| p.degree() == 24));
        t.check_invariants().unwrap();
    }

    #[test]
    fn try_connect_respects_full_target() {
        let mut t = torrent(2, 2, 50, false);
        let mut rng = stream_rng(3, Stream::Tracker);
        for _ in 0..4 {
            t.add_peer(false);
        }
        for p in 0..4 {
            t.peers[p as usize].arrived = true;
            t.tracker.register_peer(p, false, 0.0, &mut rng).unwrap();
        }
        assert!(t.try_connect(1, 0).unwrap());
        assert_eq!((t.peer(0).degree(), t.peer(1).degree()), (1, 1));
        assert!(t.try_connect(2, 0).unwrap());
        // peer 0 now holds the maximum of 2 neighbours
        assert!(!t.try_connect(3, 0).unwrap());
        assert_eq!(t.peer(3).degree(), 0);
        assert_eq!(t.try_connect(1, 0), Err(ProtocolError::AlreadyConnected(1, 0)));
        assert_eq!(t.try_connect(1, 1), Err(ProtocolError::SelfConnect(1)));
        t.check_invariants().unwrap();
    }

    #[test]
    fn try_connect_precondition_errors() {
        let mut t = torrent(3, 1, 50, false);
        for _ in 0..3 {
            let p = t.add_peer(false);
            t.peers[p as usize].arrived = true;
        }
        assert!(t.try_connect(0, 1).unwrap());
        assert_eq!(t.try_connect(0, 2), Err(ProtocolError::OutgoingExhausted(0)));
        let q = t.add_peer(false);
        assert_eq!(t.try_connect(q, 0), Err(ProtocolError::NotAlive(q)));
    }

    /// Builds `n` live peers without joining, so candidate lists are set by hand.
    fn bare(max_peer_set: u32, max_outgoing: u32, n: u32, pex: bool) -> Torrent {
        let mut t = torrent(max_peer_set, max_outgoing, 50, pex);
        for _ in 0..n {
            let p = t.add_peer(false);
            t.peers[p as usize].arrived = true;
        }
        t
    }

    fn give_tracker_candidates(t: &mut Torrent, p: PeerIndex, cands: impl IntoIterator<Item = PeerIndex>) {
        let peer = &mut t.peers[p as usize];
        for k in cands {
            peer.candidates.insert(k as usize);
            peer.l_tracker.push_back(k);
        }
    }

    #[test]
    fn fill_stops_at_outgoing_budget() {
        let mut t = bare(80, 40, 51, false);
        give_tracker_candidates(&mut t, 0, 1..51);
        t.fill_connections(0);
        assert_eq!(t.peer(0).outgoing_initiated(), 40);
        assert_eq!(t.peer(0).l_tracker().len(), 10);
        t.check_invariants().unwrap();
    }

    #[test]
    fn fill_consumes_full_candidates() {
        // 50 candidates of which 20 are saturated
        let mut t = bare(3, 3, 51, false);
        t.params.max_outgoing = 40;
        t.params.max_peer_set = 80;
        give_tracker_candidates(&mut t, 0, 1..51);
        for k in 1..21u32 {
            let peer = &mut t.peers[k as usize];
            for filler in 0..80u32 {
                peer.links.push(Link {
                    peer: 1000 + filler,
                    initiated: false,
                    edge: u64::MAX,
                });
            }
        }
        t.fill_connections(0);
        assert_eq!(t.peer(0).degree(), 30);
        assert!(t.peer(0).l_tracker().is_empty());
    }

    #[test]
    fn fill_without_candidates_is_noop() {
        let mut t = bare(80, 40, 2, false);
        t.fill_connections(0);
        assert_eq!(t.peer(0).degree(), 0);
        assert!(t.take_log().is_empty());
    }

    #[test]
    fn lone_neighbor_departure_leaves_peer_waiting() {
        let mut t = bare(80, 40, 2, false);
        let mut rng = stream_rng(4, Stream::Tracker);
        t.try_connect(0, 1).unwrap();
        t.peers[0].last_tracker_request = Some(0.0);
        t.depart(1, 10.0, &mut rng).unwrap();
        assert_eq!(t.peer(0).degree(), 0);
        assert_eq!(t.peer(0).outgoing_initiated(), 0);
        // below threshold but inside the 300 s gate: a retry is scheduled
        assert_eq!(
            t.take_followups(),
            [Followup::Recontact { peer: 0, at: 300.0 }]
        );
        t.check_invariants().unwrap();
    }

    #[test]
    fn departure_repaired_from_remaining_candidate() {
        let mut t = bare(80, 1, 3, false);
        let mut rng = stream_rng(5, Stream::Tracker);
        t.try_connect(0, 1).unwrap();
        give_tracker_candidates(&mut t, 0, [2]);
        t.depart(1, 5.0, &mut rng).unwrap();
        assert!(t.peer(0).is_neighbor(2));
        assert_eq!(t.peer(0).degree(), 1);
    }

    #[test]
    fn recontact_gates() {
        let mut t = bare(80, 40, 30, false);
        let mut rng = stream_rng(6, Stream::Tracker);
        for p in 0..30 {
            t.tracker.register_peer(p, false, 0.0, &mut rng).unwrap();
        }
        // degree 25 with threshold 20: no request
        for k in 1..26 {
            t.try_connect(0, k).unwrap();
        }
        assert!(!t.maybe_recontact_tracker(0, 1000.0, &mut rng));
        // degree 5, last request 100 s ago: interval gate holds
        t.peers[29].last_tracker_request = Some(900.0);
        for k in 0..5 {
            t.try_connect(29, k + 1).unwrap();
        }
        assert!(!t.maybe_recontact_tracker(29, 1000.0, &mut rng));
        // degree 5, last request 400 s ago: asks
        t.peers[29].last_tracker_request = Some(600.0);
        assert!(t.maybe_recontact_tracker(29, 1000.0, &mut rng));
        assert_eq!(t.peer(29).last_tracker_request(), Some(1000.0));
    }

    #[test]
    fn recontact_timer_does_not_spin_on_float_rounding() {
        let mut t = bare(80, 40, 2, false);
        let mut rng = stream_rng(7, Stream::Tracker);
        let last = 123.456_789;
        t.peers[0].last_tracker_request = Some(last);
        assert!(!t.maybe_recontact_tracker(0, 200.0, &mut rng));
        let [Followup::Recontact { at, .. }] = t.take_followups()[..] else {
            panic!("expected one retry");
        };
        assert!(t.on_recontact_due(0, at, &mut rng));
    }

    #[test]
    fn pex_filter_cases() {
        let mut t = bare(80, 40, 4, true);
        give_tracker_candidates(&mut t, 0, [2]);
        t.try_connect(0, 1).unwrap();
        assert!(!t.pex_candidate_filter(0, 0));
        assert!(!t.pex_candidate_filter(0, 1));
        assert!(!t.pex_candidate_filter(0, 2));
        assert!(t.pex_candidate_filter(0, 3));
    }

    #[test]
    fn pex_triangle_closure_and_dedup() {
        // 0-1 and 1-2 exist; gossip on 0-1 tells 0 about 2
        let mut t = bare(80, 40, 4, true);
        t.try_connect(0, 1).unwrap();
        t.try_connect(2, 1).unwrap();
        t.pex_exchange(0, 1, 0.0).unwrap();
        assert!(t.peer(0).is_neighbor(2));
        assert!(t.peer(0).l_pex().is_empty());
        // peer 3 hears about 0 from two neighbours but stores it once
        let mut t = bare(80, 1, 4, true);
        t.try_connect(1, 0).unwrap();
        t.try_connect(2, 0).unwrap();
        t.try_connect(3, 1).unwrap();
        t.peers[2].outgoing_initiated = 0;
        t.peers[2].links[0].initiated = false;
        t.peers[0].links[1].initiated = true;
        t.peers[0].outgoing_initiated = 1;
        t.params.max_outgoing = 1;
        t.pex_exchange(3, 1, 0.0).unwrap();
        t.pex_exchange(1, 0, 0.0).unwrap();
        let before = t.peer(3).l_pex().len();
        t.pex_exchange(3, 1, 60.0).unwrap();
        assert_eq!(t.peer(3).l_pex().len(), before);
        assert_eq!(t.peer(3).l_pex().iter().filter(|&&k| k == 0).count(), 1);
    }

    #[test]
    fn pex_noop_when_nothing_new() {
        let mut t = bare(80, 40, 3, true);
        t.try_connect(0, 1).unwrap();
        t.try_connect(0, 2).unwrap();
        t.try_connect(1, 2).unwrap();
        t.pex_exchange(0, 1, 0.0).unwrap();
        assert!(t.peer(0).l_pex().is_empty());
        assert!(t.peer(1).l_pex().is_empty());
    }

    #[test]
    fn pex_connection_to_nated_peer_fails() {
        let mut t = torrent(80, 40, 50, true);
        for nated in [false, false, true] {
            let p = t.add_peer(nated);
            t.peers[p as usize].arrived = true;
        }
        // the NATed peer 2 initiated towards 1, so 1 advertises it to 0
        t.try_connect(2, 1).unwrap();
        t.try_connect(0, 1).unwrap();
        t.pex_exchange(0, 1, 0.0).unwrap();
        assert!(!t.peer(0).is_neighbor(2));
        t.params.pex_nat_blocks = false;
        let mut rng = stream_rng(8, Stream::Tracker);
        t.depart(1, 1.0, &mut rng).unwrap();
        let p = t.add_peer(false);
        t.peers[p as usize].arrived = true;
        t.try_connect(2, p).unwrap();
        t.try_connect(0, p).unwrap();
        t.pex_exchange(0, p, 2.0).unwrap();
        assert!(t.peer(0).is_neighbor(2));
    }

    #[test]
    fn tracker_candidates_have_priority_over_pex() {
        let mut t = bare(80, 1, 4, true);
        {
            let peer = &mut t.peers[0];
            peer.candidates.insert(3);
            peer.l_pex.push_back(3);
        }
        give_tracker_candidates(&mut t, 0, [2]);
        t.fill_connections(0);
        assert!(t.peer(0).is_neighbor(2));
        assert!(!t.peer(0).is_neighbor(3));
        assert_eq!(t.peer(0).l_pex().len(), 1);
    }

    #[test]
    fn pex_replacement_after_departure_keeps_degree() {
        let mut t = bare(2, 2, 4, true);
        let mut rng = stream_rng(9, Stream::Tracker);
        t.try_connect(0, 1).unwrap();
        t.try_connect(0, 2).unwrap();
        {
            let peer = &mut t.peers[0];
            peer.candidates.insert(3);
            peer.l_pex.push_back(3);
        }
        t.depart(1, 1.0, &mut rng).unwrap();
        assert_eq!(t.peer(0).degree(), 2);
        assert!(t.peer(0).is_neighbor(3));
    }

    #[test]
    fn stale_gossip_timer_is_dropped() {
        let mut t = bare(80, 40, 2, true);
        let mut rng = stream_rng(10, Stream::Tracker);
        t.try_connect(0, 1).unwrap();
        let [Followup::PexGossip { edge, .. }] = t.take_followups()[..] else {
            panic!("expected one gossip timer");
        };
        assert!(t.on_pex_due(0, 1, edge, 0.0));
        assert!(!t.on_pex_due(0, 1, edge + 1, 0.0));
        t.depart(1, 5.0, &mut rng).unwrap();
        assert!(!t.on_pex_due(0, 1, edge, 60.0));
    }
}
