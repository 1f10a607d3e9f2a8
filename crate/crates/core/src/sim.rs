//! The event loop and its recorded output.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::event::{Event, EventKind, EventQueue};
use crate::graph::OverlayGraph;
use crate::peer::{Change, Followup, LogEntry, PeerDump, Torrent, Violation};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::workload::{plan_peers, PeerPlan};
use crate::{PeerIndex, Seconds};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SnapshotError {
    #[error("t = {t} s lies outside the simulated horizon [0, {horizon}] s")]
    OutOfRange { t: Seconds, horizon: Seconds },
}

/// Population and edge count at one sampling instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationSample {
    pub t: Seconds,
    pub alive: u32,
    pub edges: u32,
}

/// A single run, advanced one event at a time.
pub struct Simulation {
    cfg: ScenarioConfig,
    plan: Vec<PeerPlan>,
    torrent: Torrent,
    queue: EventQueue,
    rng: SimRng,
    log: Vec<LogEntry>,
    samples: Vec<PopulationSample>,
    dumps: Option<Vec<(Seconds, Vec<PeerDump>)>>,
    next_sample: u64,
    alive: u32,
    edges: u32,
    last_event: Option<Seconds>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let plan = plan_peers(&cfg, &mut stream_rng(cfg.seed, Stream::Workload));
        let mut torrent = Torrent::from_config(&cfg, plan.len());
        let mut queue = EventQueue::new();
        for (i, p) in plan.iter().enumerate() {
            torrent.add_peer(p.nated);
            queue.push(Event {
                time: p.arrival,
                kind: EventKind::PeerArrives,
                subject: i as PeerIndex,
            });
        }
        let rng = stream_rng(cfg.seed, Stream::Tracker);
        Ok(Self {
            cfg,
            plan,
            torrent,
            queue,
            rng,
            log: Vec::new(),
            samples: Vec::new(),
            dumps: None,
            next_sample: 0,
            alive: 0,
            edges: 0,
            last_event: None,
        })
    }

    /// Also record a per-peer state dump at every sampling instant.
    pub fn with_peer_dumps(mut self) -> Self {
        self.dumps = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &[PeerPlan] {
        &self.plan
    }

    pub fn torrent(&self) -> &Torrent {
        &self.torrent
    }

    pub fn now(&self) -> Seconds {
        self.last_event.unwrap_or(0.0)
    }

    pub fn check_invariants(&self) -> Result<(), Violation> {
        self.torrent.check_invariants()
    }

    /// Time of the event [`step`](Self::step) would process next.
    pub fn next_event_time(&self) -> Option<Seconds> {
        self.queue.peek_time()
    }

    /// Processes every event at or before `t`.
    pub fn advance_to(&mut self, t: Seconds) {
        while self.next_event_time().is_some_and(|next| next <= t) {
            self.step();
        }
    }

    fn sample_time(&self, k: u64) -> Seconds {
        k as f64 * self.cfg.snapshot_interval_secs
    }

    fn take_sample(&mut self) {
        let t = self.sample_time(self.next_sample);
        self.samples.push(PopulationSample {
            t,
            alive: self.alive,
            edges: self.edges,
        });
        if let Some(dumps) = &mut self.dumps {
            dumps.push((t, self.torrent.dump()));
        }
        self.next_sample += 1;
    }

    /// Processes the next event. `None` once the queue is empty.
    pub fn step(&mut self) -> Option<Event> {
        let ev = self.queue.pop()?;
        while self.sample_time(self.next_sample) < ev.time {
            self.take_sample();
        }
        self.last_event = Some(ev.time);
        self.torrent.set_now(ev.time);
        self.dispatch(ev);
        self.drain();
        Some(ev)
    }

    fn dispatch(&mut self, ev: Event) {
        let p = ev.subject;
        let t = ev.time;
        let alive = self.torrent.peer(p).is_alive();
        let nated = self.torrent.peer(p).is_nated();
        match ev.kind {
            EventKind::PeerArrives => {
                self.torrent
                    .join(p, t, &mut self.rng)
                    .expect("each peer arrives once");
                self.queue.push(Event {
                    time: self.plan[p as usize].departure,
                    kind: EventKind::PeerDeparts,
                    subject: p,
                });
                if self.cfg.announce_enabled {
                    self.push(t + self.cfg.announce_interval(), EventKind::AnnounceDue, p);
                }
                self.schedule_expiry_check(p);
            }
            EventKind::PeerDeparts => {
                self.torrent
                    .depart(p, t, &mut self.rng)
                    .expect("departing peer is alive");
            }
            EventKind::AnnounceDue if alive => {
                let tracker = self.torrent.tracker_mut();
                if tracker.is_registered(p) {
                    tracker.announce(p, t).expect("registered");
                } else {
                    tracker
                        .register_peer(p, nated, t, &mut self.rng)
                        .expect("not registered");
                }
                self.push(t + self.cfg.announce_interval(), EventKind::AnnounceDue, p);
                self.schedule_expiry_check(p);
            }
            EventKind::TrackerExpirySweep if alive => {
                if self.torrent.tracker_mut().expire_if_stale(p, t) {
                    self.torrent.record_expiry(p);
                }
            }
            EventKind::PexGossipDue { partner, edge } => {
                if self.torrent.on_pex_due(p, partner, edge, t) {
                    self.push(t + self.cfg.pex_period(), ev.kind, p);
                }
            }
            EventKind::RecontactEligible if alive => {
                self.torrent.on_recontact_due(p, t, &mut self.rng);
            }
            EventKind::AnnounceDue | EventKind::TrackerExpirySweep | EventKind::RecontactEligible => {}
        }
    }

    fn push(&mut self, time: Seconds, kind: EventKind, subject: PeerIndex) {
        self.queue.push(Event {
            time,
            kind,
            subject,
        });
    }

    fn schedule_expiry_check(&mut self, p: PeerIndex) {
        if let Some(reg) = self.torrent.tracker().registration(p) {
            let at = reg.last_announce + reg.expiry_after;
            self.push(at, EventKind::TrackerExpirySweep, p);
        }
    }

    fn drain(&mut self) {
        for f in self.torrent.take_followups() {
            match f {
                Followup::PexGossip { a, b, edge, at } => {
                    self.push(at, EventKind::PexGossipDue { partner: b, edge }, a);
                }
                Followup::Recontact { peer, at } => self.push(at, EventKind::RecontactEligible, peer),
            }
        }
        for entry in self.torrent.take_log() {
            match entry.change {
                Change::Arrive { .. } => self.alive += 1,
                Change::Depart { .. } => self.alive -= 1,
                Change::Connect { .. } => self.edges += 1,
                Change::Disconnect { .. } => self.edges -= 1,
                Change::TrackerResponse { .. } | Change::Expired { .. } => {}
            }
            self.log.push(entry);
        }
    }

    /// Runs to quiescence.
    pub fn run(mut self) -> SimulationResult {
        while self.step().is_some() {}
        let interval = self.cfg.snapshot_interval_secs;
        // timers that fire after the last change leave nothing to observe
        let horizon = match self.log.last() {
            Some(last) => libm::ceil(last.t / interval) * interval,
            None => 0.0,
        };
        if self.log.is_empty() {
            self.samples.clear();
        } else {
            self.samples.retain(|s| s.t <= horizon);
            while self.sample_time(self.next_sample) <= horizon {
                self.take_sample();
            }
        }
        if let Some(dumps) = &mut self.dumps {
            dumps.truncate(self.samples.len());
        }
        SimulationResult {
            config: self.cfg,
            plan: self.plan,
            log: self.log,
            samples: self.samples,
            peer_dumps: self.dumps.unwrap_or_default(),
            horizon,
        }
    }
}

pub fn run_scenario(cfg: ScenarioConfig) -> Result<SimulationResult, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

/// Everything recorded during a run.
///
/// The change log is complete: any snapshot can be rebuilt from it.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub config: ScenarioConfig,
    pub plan: Vec<PeerPlan>,
    pub log: Vec<LogEntry>,
    /// One sample every `snapshot_interval_secs`, from `t = 0` to the horizon.
    pub samples: Vec<PopulationSample>,
    pub peer_dumps: Vec<(Seconds, Vec<PeerDump>)>,
    /// Smallest multiple of the sampling interval at or after the last change.
    pub horizon: Seconds,
}

impl SimulationResult {
    pub fn num_peers(&self) -> usize {
        self.plan.len()
    }

    pub fn peak_population(&self) -> u32 {
        let mut alive = 0u32;
        let mut peak = 0;
        for e in &self.log {
            match e.change {
                Change::Arrive { .. } => {
                    alive += 1;
                    peak = peak.max(alive);
                }
                Change::Depart { .. } => alive -= 1,
                _ => {}
            }
        }
        peak
    }

    /// The overlay right after every event at or before `t`.
    pub fn snapshot(&self, t: Seconds) -> Result<OverlayGraph, SnapshotError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SnapshotError::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let mut replay = Replay::new(self.num_peers());
        replay.advance(&self.log, t);
        Ok(replay.graph())
    }

    /// Snapshots at every sampling instant, rebuilt incrementally.
    pub fn snapshots(&self) -> Snapshots<'_> {
        Snapshots {
            result: self,
            replay: Replay::new(self.num_peers()),
            next: 0,
        }
    }
}

struct Replay {
    alive: Vec<bool>,
    edges: BTreeSet<(PeerIndex, PeerIndex)>,
    pos: usize,
}

impl Replay {
    fn new(n: usize) -> Self {
        Self {
            alive: vec![false; n],
            edges: BTreeSet::new(),
            pos: 0,
        }
    }

    fn advance(&mut self, log: &[LogEntry], t: Seconds) {
        while let Some(e) = log.get(self.pos).filter(|e| e.t <= t) {
            let key = |a: PeerIndex, b: PeerIndex| if a < b { (a, b) } else { (b, a) };
            match e.change {
                Change::Arrive { peer, .. } => self.alive[peer as usize] = true,
                Change::Depart { peer } => self.alive[peer as usize] = false,
                Change::Connect {
                    initiator, target, ..
                } => {
                    self.edges.insert(key(initiator, target));
                }
                Change::Disconnect { a, b } => {
                    self.edges.remove(&key(a, b));
                }
                Change::TrackerResponse { .. } | Change::Expired { .. } => {}
            }
            self.pos += 1;
        }
    }

    fn graph(&self) -> OverlayGraph {
        OverlayGraph::from_sorted_unchecked(self.alive.clone(), self.edges.iter().copied().collect())
    }
}

pub struct Snapshots<'a> {
    result: &'a SimulationResult,
    replay: Replay,
    next: usize,
}

impl Iterator for Snapshots<'_> {
    type Item = (Seconds, OverlayGraph);

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.result.samples.get(self.next)?.t;
        self.next += 1;
        self.replay.advance(&self.result.log, t);
        Some((t, self.replay.graph()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.result.samples.len() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Snapshots<'_> {}
