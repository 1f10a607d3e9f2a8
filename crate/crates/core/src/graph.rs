//! Immutable overlay snapshots.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::PeerIndex;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("self edge on peer {0}")]
    SelfEdge(PeerIndex),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(PeerIndex, PeerIndex),
    #[error("edge ({0}, {1}) touches a peer that is not alive")]
    DeadEndpoint(PeerIndex, PeerIndex),
    #[error("peer {0} is outside the graph")]
    OutOfRange(PeerIndex),
    #[error("peer {peer} has degree {degree} above the cap {cap}")]
    DegreeCap { peer: PeerIndex, degree: u32, cap: u32 },
}

/// Alive peers and open connections at one instant.
///
/// Peers are identified by arrival index; `alive[i]` says whether peer `i`
/// is present. Edges are stored once as `(low, high)` pairs, sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OverlayGraph {
    alive: Vec<bool>,
    edges: Vec<(PeerIndex, PeerIndex)>,
}

impl OverlayGraph {
    /// A graph with `n` alive peers and no edges.
    pub fn isolated(n: usize) -> Self {
        Self {
            alive: vec![true; n],
            edges: Vec::new(),
        }
    }

    /// Builds and validates a snapshot. Edge orientation is irrelevant.
    pub fn from_parts<I>(alive: Vec<bool>, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (PeerIndex, PeerIndex)>,
    {
        let n = alive.len();
        let mut norm: Vec<(PeerIndex, PeerIndex)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfEdge(a));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if hi as usize >= n {
                return Err(GraphError::OutOfRange(hi));
            }
            if !alive[lo as usize] || !alive[hi as usize] {
                return Err(GraphError::DeadEndpoint(lo, hi));
            }
            norm.push((lo, hi));
        }
        norm.sort_unstable();
        if let Some(w) = norm.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        Ok(Self { alive, edges: norm })
    }

    /// Skips validation; `edges` must already be sorted `(low, high)` pairs
    /// between alive peers.
    pub(crate) fn from_sorted_unchecked(alive: Vec<bool>, edges: Vec<(PeerIndex, PeerIndex)>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        Self { alive, edges }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n as PeerIndex).flat_map(|a| (a + 1..n as PeerIndex).map(move |b| (a, b)));
        Self::from_parts(vec![true; n], edges).expect("complete graph is well formed")
    }

    pub fn path(n: usize) -> Self {
        let edges = (1..n as PeerIndex).map(|b| (b - 1, b));
        Self::from_parts(vec![true; n], edges).expect("path graph is well formed")
    }

    /// Star centred on peer 0.
    pub fn star(n: usize) -> Self {
        let edges = (1..n as PeerIndex).map(|b| (0, b));
        Self::from_parts(vec![true; n], edges).expect("star graph is well formed")
    }

    pub fn num_peers_ever(&self) -> usize {
        self.alive.len()
    }

    pub fn is_alive(&self, p: PeerIndex) -> bool {
        self.alive.get(p as usize).copied().unwrap_or(false)
    }

    pub fn alive_mask(&self) -> &[bool] {
        &self.alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn alive_peers(&self) -> impl Iterator<Item = PeerIndex> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as PeerIndex)
    }

    pub fn edges(&self) -> &[(PeerIndex, PeerIndex)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: PeerIndex, b: PeerIndex) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Degree of every peer ever seen; departed peers have degree 0.
    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.alive.len()];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::new(self.alive.len(), &self.edges)
    }

    pub fn check_degree_cap(&self, cap: u32) -> Result<(), GraphError> {
        match self
            .degrees()
            .into_iter()
            .enumerate()
            .find(|&(_, d)| d > cap)
        {
            Some((peer, degree)) => Err(GraphError::DegreeCap {
                peer: peer as PeerIndex,
                degree,
                cap,
            }),
            None => Ok(()),
        }
    }

    /// Copy of the graph with every peer flagged in `remove` taken out
    /// along with its incident edges.
    pub fn without(&self, remove: &[bool]) -> Self {
        let gone = |p: PeerIndex| remove.get(p as usize).copied().unwrap_or(false);
        let alive = self
            .alive
            .iter()
            .enumerate()
            .map(|(i, &a)| a && !gone(i as PeerIndex))
            .collect();
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(a, b)| !gone(a) && !gone(b))
            .collect();
        Self { alive, edges }
    }
}

/// Compressed adjacency lists.
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<PeerIndex>,
}

impl Adjacency {
    fn new(n: usize, edges: &[(PeerIndex, PeerIndex)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(a, b) in edges {
            offsets[a as usize + 1] += 1;
            offsets[b as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0; offsets[n]];
        for &(a, b) in edges {
            targets[fill[a as usize]] = b;
            fill[a as usize] += 1;
            targets[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        Self { offsets, targets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, v: PeerIndex) -> &[PeerIndex] {
        &self.targets[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }
}
