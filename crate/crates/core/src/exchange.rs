//! Round-based piece replication over a fixed overlay.
//!
//! Every round each peer rechokes, then unchoked links carry data: an
//! uploader splits its capacity equally over the links that have something
//! to send, and a downloader taking more than its capacity has every
//! incoming link scaled down proportionally. A link keeps working on its
//! current piece across rounds while it stays unchoked. Pieces finished
//! during a round can be shared from the next round on.
//!
//! Leechers unchoke the `regular_slots` interested neighbours that sent them
//! the most data during the previous round (ties to the lower index) plus
//! `optimistic_slots` random other interested neighbours. Seeds hand the
//! same number of slots round-robin over interested neighbours. Piece
//! selection is local rarest first over the downloader's peer set, after
//! finishing any piece already started (its blocks are requested first).

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::bitset::BitSet;
use crate::graph::OverlayGraph;
use crate::rng::{stream_rng, SimRng, Stream};
use crate::{PeerIndex, Seconds};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExchangeError {
    #[error("a random overlay of degree {degree} needs more than {degree} peers (got {peers})")]
    Overlay { peers: u32, degree: u32 },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("upload range must satisfy 0 <= lo <= hi")]
    UploadRange,
    #[error("overlay has {got} peers, configuration expects {expected}")]
    OverlaySize { got: usize, expected: u32 },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct ExchangeConfig {
    pub num_peers: u32,
    pub target_peer_set: u32,
    pub file_size_bytes: u64,
    pub num_pieces: u32,
    pub download_kbps: f64,
    /// Per-peer upload capacity is drawn uniformly from this range.
    pub upload_kbps: (f64, f64),
    pub regular_slots: u32,
    pub optimistic_slots: u32,
    /// Rounds an optimistic unchoke is held before a new draw.
    pub optimistic_period_rounds: u32,
    pub round_secs: f64,
    pub rounds_limit: u32,
    pub seed: u64,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            num_peers: 1000,
            target_peer_set: 50,
            file_size_bytes: 100_000_000,
            num_pieces: 100,
            download_kbps: 1000.0,
            upload_kbps: (160.0, 350.0),
            regular_slots: 3,
            optimistic_slots: 1,
            optimistic_period_rounds: 1,
            round_secs: 10.0,
            rounds_limit: 20_000,
            seed: 1,
        }
    }
}

impl ExchangeConfig {
    pub fn validate(&self) -> Result<(), ExchangeError> {
        if self.num_peers <= self.target_peer_set || self.target_peer_set == 0 {
            return Err(ExchangeError::Overlay {
                peers: self.num_peers,
                degree: self.target_peer_set,
            });
        }
        for (name, ok) in [
            ("num_pieces", self.num_pieces > 0),
            ("file_size_bytes", self.file_size_bytes >= u64::from(self.num_pieces)),
            ("download_kbps", self.download_kbps > 0.0),
            ("round_secs", self.round_secs > 0.0),
            ("optimistic_period_rounds", self.optimistic_period_rounds > 0),
            ("regular_slots + optimistic_slots", self.regular_slots + self.optimistic_slots > 0),
        ] {
            if !ok {
                return Err(ExchangeError::NonPositive(name));
            }
        }
        let (lo, hi) = self.upload_kbps;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ExchangeError::UploadRange);
        }
        Ok(())
    }

    pub fn piece_size(&self) -> f64 {
        (self.file_size_bytes / u64::from(self.num_pieces)) as f64
    }
}

fn kbps_to_bytes_per_sec(kbps: f64) -> f64 {
    kbps * 1000.0 / 8.0
}

/// Adds peers in index order; each takes random partners among those still
/// below `target_degree` until it reaches the target or nobody is left.
pub fn random_overlay<R: Rng + ?Sized>(n: u32, target_degree: u32, rng: &mut R) -> Result<OverlayGraph, ExchangeError> {
    if n <= target_degree || target_degree == 0 {
        return Err(ExchangeError::Overlay {
            peers: n,
            degree: target_degree,
        });
    }
    let n = n as usize;
    let mut degree = vec![0u32; n];
    let mut adjacent: Vec<BitSet> = (0..n).map(|_| BitSet::with_capacity(n)).collect();
    // peers still below the target, with O(1) removal
    let mut open: Vec<PeerIndex> = (0..n as PeerIndex).collect();
    let mut slot: Vec<usize> = (0..n).collect();
    let mut edges = Vec::with_capacity(n * target_degree as usize / 2);
    let close = |p: PeerIndex, open: &mut Vec<PeerIndex>, slot: &mut Vec<usize>| {
        let at = slot[p as usize];
        open.swap_remove(at);
        if let Some(&moved) = open.get(at) {
            slot[moved as usize] = at;
        }
    };
    for i in 0..n as PeerIndex {
        while degree[i as usize] < target_degree {
            let eligible = |j: PeerIndex| j != i && !adjacent[i as usize].contains(j as usize);
            let mut pick = None;
            for _ in 0..32 {
                let j = open[rng.gen_range(0..open.len())];
                if eligible(j) {
                    pick = Some(j);
                    break;
                }
            }
            if pick.is_none() {
                let left: Vec<PeerIndex> = open.iter().copied().filter(|&j| eligible(j)).collect();
                if left.is_empty() {
                    break;
                }
                pick = Some(left[rng.gen_range(0..left.len())]);
            }
            let j = pick.expect("partner chosen");
            adjacent[i as usize].insert(j as usize);
            adjacent[j as usize].insert(i as usize);
            edges.push((i, j));
            for p in [i, j] {
                degree[p as usize] += 1;
                if degree[p as usize] == target_degree {
                    close(p, &mut open, &mut slot);
                }
            }
        }
    }
    Ok(OverlayGraph::from_parts(vec![true; n], edges).expect("random overlay is well formed"))
}

/// Bytes moved during one round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    pub sent: Vec<f64>,
    pub received: Vec<f64>,
    /// `(peer, piece)` completed this round.
    pub completed: Vec<(PeerIndex, u32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Transfer {
    /// Position of the downloader in the uploader's neighbour list.
    slot: u32,
    piece: u32,
}

/// State of one piece-exchange run. Peer 0 is the initial seed.
pub struct Swarm {
    cfg: ExchangeConfig,
    piece_size: f64,
    neighbors: Vec<Vec<PeerIndex>>,
    // back[u][k]: position of u in neighbors[neighbors[u][k]]
    back: Vec<Vec<u32>>,
    have: Vec<BitSet>,
    // availability[d][piece]: neighbours of d holding piece
    availability: Vec<Vec<u16>>,
    progress: Vec<Vec<f64>>,
    in_flight: Vec<BitSet>,
    upload: Vec<f64>,
    download: f64,
    unchoked: Vec<Vec<u32>>,
    regular: Vec<u32>,
    transfers: Vec<Vec<Transfer>>,
    // received_from[u][k]: bytes u got from neighbors[u][k] last round
    received_from: Vec<Vec<f64>>,
    cursor: Vec<u32>,
    completed_round: Vec<Option<u32>>,
    round: u32,
    rng: SimRng,
}

impl Swarm {
    /// Draws upload capacities from `rng` in peer order.
    pub fn new(cfg: ExchangeConfig, overlay: &OverlayGraph, mut rng: SimRng) -> Result<Self, ExchangeError> {
        cfg.validate()?;
        let n = overlay.num_peers_ever();
        if n != cfg.num_peers as usize {
            return Err(ExchangeError::OverlaySize {
                got: n,
                expected: cfg.num_peers,
            });
        }
        let adj = overlay.adjacency();
        let neighbors: Vec<Vec<PeerIndex>> = (0..n as PeerIndex).map(|p| adj.neighbors(p).to_vec()).collect();
        let back = neighbors
            .iter()
            .enumerate()
            .map(|(u, list)| {
                list.iter()
                    .map(|&d| {
                        neighbors[d as usize]
                            .iter()
                            .position(|&x| x as usize == u)
                            .expect("symmetric adjacency") as u32
                    })
                    .collect()
            })
            .collect();
        let pieces = cfg.num_pieces as usize;
        let (lo, hi) = cfg.upload_kbps;
        let upload = (0..n)
            .map(|_| kbps_to_bytes_per_sec(if lo == hi { lo } else { rng.gen_range(lo..=hi) }))
            .collect();
        let mut have: Vec<BitSet> = (0..n).map(|_| BitSet::with_capacity(pieces)).collect();
        let mut availability = vec![vec![0u16; pieces]; n];
        let mut completed_round = vec![None; n];
        for piece in 0..pieces {
            have[0].insert(piece);
        }
        completed_round[0] = Some(0);
        for &q in &neighbors[0] {
            availability[q as usize].fill(1);
        }
        Ok(Self {
            piece_size: cfg.piece_size(),
            download: kbps_to_bytes_per_sec(cfg.download_kbps),
            progress: vec![vec![0.0; pieces]; n],
            in_flight: (0..n).map(|_| BitSet::with_capacity(pieces)).collect(),
            unchoked: vec![Vec::new(); n],
            regular: vec![0; n],
            transfers: vec![Vec::new(); n],
            received_from: neighbors.iter().map(|l| vec![0.0; l.len()]).collect(),
            cursor: vec![0; n],
            round: 0,
            cfg,
            neighbors,
            back,
            have,
            availability,
            upload,
            completed_round,
            rng,
        })
    }

    pub fn config(&self) -> &ExchangeConfig {
        &self.cfg
    }

    pub fn num_peers(&self) -> usize {
        self.neighbors.len()
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn pieces_held(&self, p: PeerIndex) -> u32 {
        self.have[p as usize].len() as u32
    }

    pub fn has_piece(&self, p: PeerIndex, piece: u32) -> bool {
        self.have[p as usize].contains(piece as usize)
    }

    pub fn is_seed(&self, p: PeerIndex) -> bool {
        self.have[p as usize].len() == self.cfg.num_pieces as usize
    }

    pub fn all_complete(&self) -> bool {
        self.completed_round.iter().all(Option::is_some)
    }

    /// Round at the end of which `p` held the whole file.
    pub fn completed_round(&self, p: PeerIndex) -> Option<u32> {
        self.completed_round[p as usize]
    }

    /// Upload capacity in bytes per second.
    pub fn upload_capacity(&self, p: PeerIndex) -> f64 {
        self.upload[p as usize]
    }

    pub fn set_upload_kbps(&mut self, p: PeerIndex, kbps: f64) {
        self.upload[p as usize] = kbps_to_bytes_per_sec(kbps);
    }

    /// Download capacity in bytes per second.
    pub fn download_capacity(&self) -> f64 {
        self.download
    }

    pub fn neighbors(&self, p: PeerIndex) -> &[PeerIndex] {
        &self.neighbors[p as usize]
    }

    pub fn unchoked(&self, p: PeerIndex) -> impl Iterator<Item = PeerIndex> + '_ {
        let list = &self.neighbors[p as usize];
        self.unchoked[p as usize].iter().map(move |&k| list[k as usize])
    }

    /// The unchokes earned by upload rate; empty for seeds.
    pub fn regular_unchokes(&self, p: PeerIndex) -> impl Iterator<Item = PeerIndex> + '_ {
        self.unchoked(p).take(self.regular[p as usize] as usize)
    }

    fn wants_from(&self, downloader: PeerIndex, uploader: PeerIndex) -> bool {
        let d = self.have[downloader as usize].words();
        let u = self.have[uploader as usize].words();
        u.iter().zip(d).any(|(u, d)| u & !d != 0)
    }

    /// Recomputes whom `p` uploads to this round.
    pub fn rechoke(&mut self, p: PeerIndex) {
        let u = p as usize;
        let mut interested: Vec<u32> = (0..self.neighbors[u].len() as u32)
            .filter(|&k| self.wants_from(self.neighbors[u][k as usize], p))
            .collect();
        let slots = (self.cfg.regular_slots + self.cfg.optimistic_slots) as usize;
        let mut chosen = Vec::with_capacity(slots);
        if self.is_seed(p) {
            // a turn lasts until the piece in progress on that link is done
            for t in &self.transfers[u] {
                let d = self.neighbors[u][t.slot as usize] as usize;
                if chosen.len() < slots && !self.have[d].contains(t.piece as usize) && interested.contains(&t.slot) {
                    chosen.push(t.slot);
                }
            }
            let deg = (self.neighbors[u].len() as u32).max(1);
            let start = self.cursor[u] % deg;
            interested.sort_unstable_by_key(|&k| (k + deg - start) % deg);
            for &k in &interested {
                if chosen.len() == slots {
                    break;
                }
                if !chosen.contains(&k) {
                    chosen.push(k);
                    self.cursor[u] = (k + 1) % deg;
                }
            }
            self.regular[u] = 0;
        } else {
            let rate = &self.received_from[u];
            let list = &self.neighbors[u];
            interested.sort_unstable_by(|&a, &b| {
                rate[b as usize]
                    .total_cmp(&rate[a as usize])
                    .then(list[a as usize].cmp(&list[b as usize]))
            });
            let regular = (self.cfg.regular_slots as usize).min(interested.len());
            chosen.extend_from_slice(&interested[..regular]);
            let mut rest = interested.split_off(regular);
            let want = (self.cfg.optimistic_slots as usize).min(rest.len());
            if self.round % self.cfg.optimistic_period_rounds != 1 % self.cfg.optimistic_period_rounds {
                for &k in &self.unchoked[u][self.regular[u] as usize..] {
                    if chosen.len() < regular + want {
                        if let Some(i) = rest.iter().position(|&r| r == k) {
                            chosen.push(rest.swap_remove(i));
                        }
                    }
                }
            }
            let missing = regular + want - chosen.len();
            for i in rand::seq::index::sample(&mut self.rng, rest.len(), missing) {
                chosen.push(rest[i]);
            }
            self.regular[u] = regular as u32;
        }
        self.unchoked[u] = chosen;
    }

    /// Rarest piece within the downloader's peer set among those the
    /// uploader has and the downloader neither has nor is already fetching.
    /// Among equally rare pieces, ones the downloader has already started
    /// come first; remaining ties are broken uniformly at random.
    pub fn select_piece(&mut self, uploader: PeerIndex, downloader: PeerIndex) -> Option<u32> {
        let u = self.have[uploader as usize].words();
        let d = self.have[downloader as usize].words();
        let busy = self.in_flight[downloader as usize].words();
        let avail = &self.availability[downloader as usize];
        let started = &self.progress[downloader as usize];
        // fewer copies wins, then pieces already started
        let mut best = (u16::MAX, true);
        let mut pick = None;
        let mut ties = 0u32;
        for (w, ((&u, &d), &busy)) in u.iter().zip(d).zip(busy).enumerate() {
            let mut bits = u & !d & !busy;
            while bits != 0 {
                let piece = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let a = (avail[piece], started[piece] == 0.0);
                if a < best {
                    best = a;
                    pick = Some(piece as u32);
                    ties = 1;
                } else if a == best {
                    ties += 1;
                    if self.rng.gen_range(0..ties) == 0 {
                        pick = Some(piece as u32);
                    }
                }
            }
        }
        pick
    }

    /// Plays one round.
    pub fn step(&mut self) -> RoundReport {
        self.round += 1;
        let n = self.num_peers();
        for p in 0..n as PeerIndex {
            self.rechoke(p);
        }
        for r in &mut self.received_from {
            r.fill(0.0);
        }
        for f in &mut self.in_flight {
            f.clear();
        }
        // links that stay unchoked keep their piece
        for u in 0..n {
            let (unchoked, neighbors, have) = (&self.unchoked[u], &self.neighbors[u], &self.have);
            self.transfers[u].retain(|t| {
                unchoked.contains(&t.slot) && !have[neighbors[t.slot as usize] as usize].contains(t.piece as usize)
            });
            for t in &self.transfers[u] {
                self.in_flight[neighbors[t.slot as usize] as usize].insert(t.piece as usize);
            }
        }
        for u in 0..n {
            for i in 0..self.unchoked[u].len() {
                let slot = self.unchoked[u][i];
                if self.transfers[u].iter().any(|t| t.slot == slot) {
                    continue;
                }
                let d = self.neighbors[u][slot as usize];
                if let Some(piece) = self.select_piece(u as PeerIndex, d) {
                    self.in_flight[d as usize].insert(piece as usize);
                    self.transfers[u].push(Transfer { slot, piece });
                }
            }
        }
        let secs: Seconds = self.cfg.round_secs;
        let mut offered = vec![0.0; n];
        for u in 0..n {
            let active = self.transfers[u].len();
            if active > 0 {
                let share = self.upload[u] * secs / active as f64;
                for t in &self.transfers[u] {
                    offered[self.neighbors[u][t.slot as usize] as usize] += share;
                }
            }
        }
        let cap = self.download * secs;
        let mut report = RoundReport {
            round: self.round,
            sent: vec![0.0; n],
            received: vec![0.0; n],
            completed: Vec::new(),
        };
        for u in 0..n {
            let active = self.transfers[u].len();
            if active == 0 {
                continue;
            }
            let share = self.upload[u] * secs / active as f64;
            let seeding = self.is_seed(u as PeerIndex);
            let mut i = 0;
            while i < self.transfers[u].len() {
                let Transfer { slot, mut piece } = self.transfers[u][i];
                let d = self.neighbors[u][slot as usize] as usize;
                let scale = if offered[d] > cap { cap / offered[d] } else { 1.0 };
                let mut budget = share * scale;
                let mut keep = true;
                while budget > 0.0 {
                    let need = self.piece_size - self.progress[d][piece as usize];
                    let take = budget.min(need);
                    self.progress[d][piece as usize] += take;
                    budget -= take;
                    report.sent[u] += take;
                    report.received[d] += take;
                    let k = self.back[u][slot as usize] as usize;
                    self.received_from[d][k] += take;
                    if take < need {
                        break;
                    }
                    report.completed.push((d as PeerIndex, piece));
                    if seeding {
                        keep = false;
                        break;
                    }
                    match self.select_piece(u as PeerIndex, d as PeerIndex) {
                        Some(next) => {
                            self.in_flight[d].insert(next as usize);
                            piece = next;
                        }
                        None => {
                            keep = false;
                            break;
                        }
                    }
                }
                if keep {
                    self.transfers[u][i].piece = piece;
                    i += 1;
                } else {
                    self.transfers[u].swap_remove(i);
                }
            }
        }
        for &(d, piece) in &report.completed {
            let d = d as usize;
            self.have[d].insert(piece as usize);
            for &q in &self.neighbors[d] {
                self.availability[q as usize][piece as usize] += 1;
            }
            if self.completed_round[d].is_none() && self.have[d].len() == self.cfg.num_pieces as usize {
                self.completed_round[d] = Some(self.round);
            }
        }
        report
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeOutcome {
    pub rounds: u32,
    /// Completion instant of every peer; peer 0 starts complete at 0.
    pub completion_secs: Vec<Option<Seconds>>,
    /// `pieces_held[r][p]`: pieces held by `p` after round `r + 1`.
    pub pieces_held: Vec<Vec<u16>>,
    /// Share of peers whose overlay degree is below the target.
    pub below_target: f64,
}

impl ExchangeOutcome {
    /// Mean completion time over the leechers that finished.
    pub fn mean_completion_secs(&self) -> Option<f64> {
        let done: Vec<f64> = self.completion_secs[1..].iter().flatten().copied().collect();
        (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64)
    }

    pub fn incomplete(&self) -> usize {
        self.completion_secs.iter().filter(|c| c.is_none()).count()
    }
}

/// Builds the overlay and runs rounds until every peer completes or the
/// round limit is hit. One RNG stream drives the overlay, capacities,
/// optimistic unchokes and tie-breaks.
pub fn run_exchange(cfg: &ExchangeConfig) -> Result<ExchangeOutcome, ExchangeError> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Exchange);
    let overlay = random_overlay(cfg.num_peers, cfg.target_peer_set, &mut rng)?;
    let below = overlay
        .degrees()
        .iter()
        .filter(|&&d| d < cfg.target_peer_set)
        .count();
    let mut swarm = Swarm::new(cfg.clone(), &overlay, rng)?;
    let mut pieces_held = Vec::new();
    while !swarm.all_complete() && swarm.round() < cfg.rounds_limit {
        swarm.step();
        pieces_held.push((0..swarm.num_peers() as PeerIndex).map(|p| swarm.pieces_held(p) as u16).collect());
    }
    let completion_secs = (0..swarm.num_peers() as PeerIndex)
        .map(|p| swarm.completed_round(p).map(|r| f64::from(r) * cfg.round_secs))
        .collect();
    Ok(ExchangeOutcome {
        rounds: swarm.round(),
        completion_secs,
        pieces_held,
        below_target: below as f64 / f64::from(cfg.num_peers),
    })
}
