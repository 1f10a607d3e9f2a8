//! The tracker: two registration lists, random peer-list responses and
//! announce bookkeeping.
//!
//! NATed peers are registered but never handed out, since nobody could
//! connect to them. Responses are uniform samples without replacement from
//! the non-NATed list.

use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::{PeerIndex, Seconds};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TrackerError {
    #[error("peer {0} is already registered")]
    AlreadyRegistered(PeerIndex),
    #[error("peer {0} is not registered")]
    UnknownPeer(PeerIndex),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Registration {
    pub nated: bool,
    pub registered_at: Seconds,
    pub last_announce: Seconds,
    /// Silence after which the peer is forgotten, drawn once at registration.
    pub expiry_after: Seconds,
}

const ABSENT: u32 = u32::MAX;

/// Set of peer indices with O(1) insert, remove and uniform indexing.
#[derive(Clone, Debug, Default)]
struct MemberList {
    members: Vec<PeerIndex>,
    position: Vec<u32>,
}

impl MemberList {
    fn position(&self, p: PeerIndex) -> Option<usize> {
        match self.position.get(p as usize) {
            Some(&pos) if pos != ABSENT => Some(pos as usize),
            _ => None,
        }
    }

    fn insert(&mut self, p: PeerIndex) {
        if self.position.len() <= p as usize {
            self.position.resize(p as usize + 1, ABSENT);
        }
        debug_assert_eq!(self.position[p as usize], ABSENT);
        self.position[p as usize] = self.members.len() as u32;
        self.members.push(p);
    }

    fn remove(&mut self, p: PeerIndex) -> bool {
        let Some(pos) = self.position(p) else {
            return false;
        };
        self.members.swap_remove(pos);
        if let Some(&moved) = self.members.get(pos) {
            self.position[moved as usize] = pos as u32;
        }
        self.position[p as usize] = ABSENT;
        true
    }
}

#[derive(Clone, Debug)]
pub struct Tracker {
    nated: MemberList,
    not_nated: MemberList,
    registrations: Vec<Option<Registration>>,
    return_count: u32,
    expiry_range: (Seconds, Seconds),
}

impl Tracker {
    /// `expiry_range` is in seconds.
    pub fn new(return_count: u32, expiry_range: (Seconds, Seconds)) -> Self {
        Self {
            nated: MemberList::default(),
            not_nated: MemberList::default(),
            registrations: Vec::new(),
            return_count,
            expiry_range,
        }
    }

    pub fn return_count(&self) -> u32 {
        self.return_count
    }

    pub fn register_peer<R: Rng + ?Sized>(
        &mut self,
        peer: PeerIndex,
        is_nated: bool,
        t: Seconds,
        rng: &mut R,
    ) -> Result<(), TrackerError> {
        if self.is_registered(peer) {
            return Err(TrackerError::AlreadyRegistered(peer));
        }
        let (lo, hi) = self.expiry_range;
        let expiry_after = rng.gen_range(lo..=hi);
        if self.registrations.len() <= peer as usize {
            self.registrations.resize(peer as usize + 1, None);
        }
        self.registrations[peer as usize] = Some(Registration {
            nated: is_nated,
            registered_at: t,
            last_announce: t,
            expiry_after,
        });
        if is_nated {
            self.nated.insert(peer);
        } else {
            self.not_nated.insert(peer);
        }
        Ok(())
    }

    /// Up to `σ` distinct non-NATed peers other than `requester`, uniformly
    /// at random.
    pub fn request_peers<R: Rng + ?Sized>(&self, requester: PeerIndex, rng: &mut R) -> Vec<PeerIndex> {
        let list = &self.not_nated.members;
        let skip = self.not_nated.position(requester);
        let available = list.len() - usize::from(skip.is_some());
        let amount = available.min(self.return_count as usize);
        rand::seq::index::sample(rng, available, amount)
            .into_iter()
            .map(|i| match skip {
                Some(s) if i >= s => list[i + 1],
                _ => list[i],
            })
            .collect()
    }

    pub fn announce(&mut self, peer: PeerIndex, t: Seconds) -> Result<(), TrackerError> {
        let reg = self
            .registrations
            .get_mut(peer as usize)
            .and_then(Option::as_mut)
            .ok_or(TrackerError::UnknownPeer(peer))?;
        reg.last_announce = t;
        Ok(())
    }

    /// Removes every peer silent for at least its expiry threshold.
    /// Returned in index order.
    pub fn expire_stale(&mut self, t: Seconds) -> Vec<PeerIndex> {
        let stale: Vec<PeerIndex> = self
            .registrations
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                r.filter(|r| t - r.last_announce >= r.expiry_after)
                    .map(|_| i as PeerIndex)
            })
            .collect();
        for &p in &stale {
            self.deregister(p).expect("stale peer is registered");
        }
        stale
    }

    /// Removes `peer` if it has been silent for at least its threshold.
    pub fn expire_if_stale(&mut self, peer: PeerIndex, t: Seconds) -> bool {
        let stale = self
            .registration(peer)
            .is_some_and(|r| t - r.last_announce >= r.expiry_after);
        if stale {
            self.deregister(peer).expect("registered");
        }
        stale
    }

    pub fn deregister(&mut self, peer: PeerIndex) -> Result<(), TrackerError> {
        let reg = self
            .registrations
            .get_mut(peer as usize)
            .and_then(Option::take)
            .ok_or(TrackerError::UnknownPeer(peer))?;
        if reg.nated {
            self.nated.remove(peer);
        } else {
            self.not_nated.remove(peer);
        }
        Ok(())
    }

    pub fn is_registered(&self, peer: PeerIndex) -> bool {
        self.registration(peer).is_some()
    }

    pub fn registration(&self, peer: PeerIndex) -> Option<&Registration> {
        self.registrations.get(peer as usize).and_then(Option::as_ref)
    }

    pub fn nated_count(&self) -> usize {
        self.nated.members.len()
    }

    pub fn not_nated_count(&self) -> usize {
        self.not_nated.members.len()
    }

    pub fn registered_count(&self) -> usize {
        self.nated_count() + self.not_nated_count()
    }

    /// Registered peers in index order, for dumps.
    pub fn registrations(&self) -> impl Iterator<Item = (PeerIndex, &Registration)> + '_ {
        self.registrations
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i as PeerIndex, r)))
    }

    pub fn check_invariants(&self) -> Result<(), &'static str> {
        for &p in &self.nated.members {
            if self.not_nated.position(p).is_some() {
                return Err("peer in both registration lists");
            }
            if !self.registration(p).is_some_and(|r| r.nated) {
                return Err("NATed list entry without NATed registration");
            }
        }
        for &p in &self.not_nated.members {
            if !self.registration(p).is_some_and(|r| !r.nated) {
                return Err("non-NATed list entry without registration");
            }
        }
        if self.registrations().count() != self.registered_count() {
            return Err("registration without list entry");
        }
        Ok(())
    }
}
