//! Closed-form models: how long a newcomer waits to fill its peer set, and
//! how fast content spreads on mesh versus chain-of-clusters overlays.

use alloc::vec::Vec;
use thiserror::Error;

use crate::graph::OverlayGraph;
use crate::PeerIndex;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("torrent size at arrival must be at least 1")]
    EmptyTorrent,
    #[error("need 0 < max_outgoing <= max_peer_set (got {max_outgoing}, {max_peer_set})")]
    Outgoing { max_peer_set: u32, max_outgoing: u32 },
    #[error("{0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("a chain needs at least one cluster")]
    NoClusters,
}

/// A peer arriving into a torrent of `n_start` peers, with peer set size
/// `max_peer_set` of which it may initiate `max_outgoing`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvergenceQuery {
    pub n_start: u64,
    pub max_peer_set: u32,
    pub max_outgoing: u32,
}

/// Expected number of later arrivals before a peer that found `n_start`
/// peers has accepted as many incoming connections as it initiated.
///
/// Each newcomer picks the peer with probability `1/n`, so this is the
/// smallest `K` with `Σ_{n = n_start+1}^{n_start+K} 1/n ≥ 1`.
pub fn convergence_k(n_start: u64) -> Result<u64, AnalysisError> {
    if n_start == 0 {
        return Err(AnalysisError::EmptyTorrent);
    }
    Ok(arrivals_until(n_start, 1.0))
}

/// `(e − 1) · n_start`, the large-torrent limit of [`convergence_k`].
pub fn convergence_k_approx(n_start: u64) -> f64 {
    (core::f64::consts::E - 1.0) * n_start as f64
}

/// `(exact − approx) / exact`.
pub fn convergence_relative_error(n_start: u64) -> Result<f64, AnalysisError> {
    let exact = convergence_k(n_start)? as f64;
    Ok((exact - convergence_k_approx(n_start)) / exact)
}

/// Arrivals needed to fill the `max_peer_set − max_outgoing` incoming slots:
/// smallest `K` with `1 + Σ 1/n ≥ max_peer_set / max_outgoing`.
pub fn convergence_k_general(q: ConvergenceQuery) -> Result<u64, AnalysisError> {
    if q.max_outgoing == 0 || q.max_outgoing > q.max_peer_set {
        return Err(AnalysisError::Outgoing {
            max_peer_set: q.max_peer_set,
            max_outgoing: q.max_outgoing,
        });
    }
    let missing = f64::from(q.max_peer_set - q.max_outgoing) / f64::from(q.max_outgoing);
    Ok(arrivals_until(q.n_start, missing))
}

fn arrivals_until(n_start: u64, target: f64) -> u64 {
    let mut sum = 0.0;
    let mut k = 0;
    while sum < target {
        k += 1;
        sum += 1.0 / (n_start + k) as f64;
    }
    k
}

/// Time units for one source to reach `num_peers` peers when every holder
/// serves one new peer per unit: `log2(num_peers)`.
pub fn mesh_service_time(num_peers: u64) -> Result<u32, AnalysisError> {
    if !num_peers.is_power_of_two() {
        return Err(AnalysisError::NotPowerOfTwo(num_peers));
    }
    Ok(num_peers.trailing_zeros())
}

/// A chain of `n_clusters` fully meshed clusters of `2^cluster_log_size`
/// peers each, consecutive clusters joined by a single link. Times are in
/// units of the single-copy transfer time (content size over per-peer rate).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServiceModel {
    n_clusters: u32,
    cluster_log_size: u32,
}

impl ServiceModel {
    pub fn new(n_clusters: u32, cluster_log_size: u32) -> Result<Self, AnalysisError> {
        if n_clusters == 0 {
            return Err(AnalysisError::NoClusters);
        }
        Ok(Self {
            n_clusters,
            cluster_log_size,
        })
    }

    pub fn n_clusters(&self) -> u32 {
        self.n_clusters
    }

    pub fn cluster_log_size(&self) -> u32 {
        self.cluster_log_size
    }

    pub fn cluster_size(&self) -> u32 {
        1 << self.cluster_log_size
    }

    pub fn total_peers(&self) -> u64 {
        u64::from(self.n_clusters) * u64::from(self.cluster_size())
    }

    /// The chain as a graph. Peer 0 is the source; cluster `c` occupies
    /// `1 + c·size .. 1 + (c+1)·size`, its first member being the gateway
    /// linked to the previous cluster's gateway (or to the source).
    pub fn chain_graph(&self) -> OverlayGraph {
        let size = self.cluster_size();
        let n = 1 + self.n_clusters * size;
        let mut edges: Vec<(PeerIndex, PeerIndex)> = Vec::new();
        for c in 0..self.n_clusters {
            let base = 1 + c * size;
            let upstream = if c == 0 { 0 } else { base - size };
            edges.push((upstream, base));
            for a in 0..size {
                for b in a + 1..size {
                    edges.push((base + a, base + b));
                }
            }
        }
        OverlayGraph::from_parts(alloc::vec![true; n as usize], edges).expect("chain is well formed")
    }
}

/// `n_clusters + cluster_log_size`: the content crosses one link per cluster,
/// then the last cluster needs `cluster_log_size` doublings.
pub fn chain_service_time(model: ServiceModel) -> u64 {
    u64::from(model.n_clusters) + u64::from(model.cluster_log_size)
}
