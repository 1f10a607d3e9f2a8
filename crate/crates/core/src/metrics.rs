//! Overlay measurements and static removal experiments.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::graph::{Adjacency, OverlayGraph};
use crate::{PeerIndex, Seconds};

/// Default number of BFS sources for [`diameter_estimate`].
pub const DIAMETER_SAMPLE: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSample {
    pub t: Seconds,
    pub avg_peer_set: f64,
    /// `0` when the overlay is partitioned or empty.
    pub diameter: u32,
    /// Component sizes, largest first.
    pub partition_sizes: Vec<u32>,
    pub alive: u32,
}

impl MetricsSample {
    pub fn num_partitions(&self) -> usize {
        self.partition_sizes.len()
    }
}

/// All four metrics of one snapshot.
pub fn measure<R: Rng + ?Sized>(g: &OverlayGraph, t: Seconds, rng: &mut R) -> MetricsSample {
    let partition_sizes = partitions(g);
    let diameter = if partition_sizes.len() == 1 {
        sampled_eccentricity(g, DIAMETER_SAMPLE, rng)
    } else {
        0
    };
    MetricsSample {
        t,
        avg_peer_set: average_peer_set_size(g),
        diameter,
        partition_sizes,
        alive: g.alive_count() as u32,
    }
}

/// `2|E| / alive`, or 0 without peers.
pub fn average_peer_set_size(g: &OverlayGraph) -> f64 {
    match g.alive_count() {
        0 => 0.0,
        n => 2.0 * g.edge_count() as f64 / n as f64,
    }
}

/// `(index, degree)` of every alive peer, in arrival order.
pub fn degree_by_arrival(g: &OverlayGraph) -> Vec<(PeerIndex, u32)> {
    let deg = g.degrees();
    g.alive_peers().map(|p| (p, deg[p as usize])).collect()
}

/// Longest shortest path seen from `min(sample_size, alive)` random sources,
/// taken over all reachable targets. `0` if the overlay is partitioned or
/// empty.
pub fn diameter_estimate<R: Rng + ?Sized>(g: &OverlayGraph, sample_size: usize, rng: &mut R) -> u32 {
    if partitions(g).len() != 1 {
        return 0;
    }
    sampled_eccentricity(g, sample_size, rng)
}

fn sampled_eccentricity<R: Rng + ?Sized>(g: &OverlayGraph, sample_size: usize, rng: &mut R) -> u32 {
    let alive: Vec<PeerIndex> = g.alive_peers().collect();
    let amount = sample_size.min(alive.len());
    let sources: Vec<PeerIndex> = if amount == alive.len() {
        alive.clone()
    } else {
        rand::seq::index::sample(rng, alive.len(), amount)
            .into_iter()
            .map(|i| alive[i])
            .collect()
    };
    max_eccentricity(&g.adjacency(), &alive, &sources)
}

/// Runs 64 breadth-first searches at once, one per bit.
fn max_eccentricity(adj: &Adjacency, alive: &[PeerIndex], sources: &[PeerIndex]) -> u32 {
    let n = adj.len();
    let mut visited = vec![0u64; n];
    let mut frontier = vec![0u64; n];
    let mut next = vec![0u64; n];
    let mut best = 0;
    for batch in sources.chunks(64) {
        visited.fill(0);
        frontier.fill(0);
        for (bit, &s) in batch.iter().enumerate() {
            visited[s as usize] |= 1 << bit;
            frontier[s as usize] |= 1 << bit;
        }
        let mut depth = 0;
        loop {
            let mut grew = false;
            for &v in alive {
                let mut reach = 0u64;
                for &u in adj.neighbors(v) {
                    reach |= frontier[u as usize];
                }
                let fresh = reach & !visited[v as usize];
                next[v as usize] = fresh;
                if fresh != 0 {
                    visited[v as usize] |= fresh;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
            depth += 1;
            core::mem::swap(&mut frontier, &mut next);
        }
        best = best.max(depth);
    }
    best
}

/// Connected-component sizes over alive peers, largest first.
pub fn partitions(g: &OverlayGraph) -> Vec<u32> {
    let adj = g.adjacency();
    let mut seen = vec![false; adj.len()];
    let mut stack = Vec::new();
    let mut sizes = Vec::new();
    for root in g.alive_peers() {
        if seen[root as usize] {
            continue;
        }
        seen[root as usize] = true;
        stack.push(root);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &u in adj.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    stack.push(u);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Number of peers removed by a removal experiment.
pub fn removal_count(alive: usize, fraction: f64) -> usize {
    assert!((0.0..=1.0).contains(&fraction), "fraction must lie in [0, 1]");
    (libm::ceil(fraction * alive as f64 - 1e-9).max(0.0) as usize).min(alive)
}

/// Removes the `⌈fraction · alive⌉` highest-degree peers, earlier arrivals
/// first among equal degrees. No repair follows.
pub fn attack(g: &OverlayGraph, fraction: f64) -> OverlayGraph {
    let deg = g.degrees();
    let mut ranked: Vec<PeerIndex> = g.alive_peers().collect();
    let k = removal_count(ranked.len(), fraction);
    ranked.sort_by(|&a, &b| deg[b as usize].cmp(&deg[a as usize]).then(a.cmp(&b)));
    remove(g, &ranked[..k])
}

/// Removes `⌈fraction · alive⌉` peers chosen uniformly at random.
pub fn churn<R: Rng + ?Sized>(g: &OverlayGraph, fraction: f64, rng: &mut R) -> OverlayGraph {
    let alive: Vec<PeerIndex> = g.alive_peers().collect();
    let k = removal_count(alive.len(), fraction);
    let victims: Vec<PeerIndex> = rand::seq::index::sample(rng, alive.len(), k)
        .into_iter()
        .map(|i| alive[i])
        .collect();
    remove(g, &victims)
}

fn remove(g: &OverlayGraph, victims: &[PeerIndex]) -> OverlayGraph {
    let mut mask = vec![false; g.num_peers_ever()];
    for &v in victims {
        mask[v as usize] = true;
    }
    g.without(&mask)
}

/// Edges with exactly one endpoint among the first `head_size` arrivals.
pub fn bottleneck_count(g: &OverlayGraph, head_size: u32) -> usize {
    g.edges()
        .iter()
        .filter(|&&(a, b)| (a < head_size) != (b < head_size))
        .count()
}

/// Edges with both endpoints among the first `head_size` arrivals.
pub fn intra_head_count(g: &OverlayGraph, head_size: u32) -> usize {
    g.edges().iter().filter(|&&(_, b)| b < head_size).count()
}

/// Edge list sorted by `(low index, high index)`.
pub fn connectivity_matrix(g: &OverlayGraph) -> Vec<(PeerIndex, PeerIndex)> {
    g.edges().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn two_cliques() -> OverlayGraph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    edges.push((base + a, base + b));
                }
            }
        }
        OverlayGraph::from_parts(vec![true; 8], edges).unwrap()
    }

    #[test]
    fn average_peer_set_cases() {
        assert_eq!(average_peer_set_size(&OverlayGraph::default()), 0.0);
        assert_eq!(average_peer_set_size(&OverlayGraph::complete(7)), 6.0);
    }

    #[test]
    fn degree_projection() {
        let g = OverlayGraph::star(6);
        assert_eq!(degree_by_arrival(&g)[0], (0, 5));
        let mean = degree_by_arrival(&g).iter().map(|d| d.1 as f64).sum::<f64>() / 6.0;
        assert!((mean - average_peer_set_size(&g)).abs() < 1e-12);
    }

    #[test]
    fn diameter_cases() {
        let mut rng = stream_rng(1, Stream::Metrics);
        assert_eq!(diameter_estimate(&OverlayGraph::complete(5), 1000, &mut rng), 1);
        assert_eq!(diameter_estimate(&OverlayGraph::path(3), 1000, &mut rng), 2);
        assert_eq!(diameter_estimate(&OverlayGraph::path(200), 1000, &mut rng), 199);
        assert_eq!(diameter_estimate(&two_cliques(), 1000, &mut rng), 0);
        assert_eq!(diameter_estimate(&OverlayGraph::default(), 1000, &mut rng), 0);
        assert_eq!(diameter_estimate(&OverlayGraph::isolated(1), 1000, &mut rng), 0);
    }

    #[test]
    fn partition_cases() {
        assert_eq!(partitions(&OverlayGraph::complete(4)), vec![4]);
        assert_eq!(partitions(&two_cliques()), vec![4, 4]);
        assert_eq!(partitions(&OverlayGraph::isolated(3)), vec![1, 1, 1]);
    }

    #[test]
    fn attack_extremes_and_ties() {
        let g = OverlayGraph::path(5);
        assert_eq!(attack(&g, 0.0), g);
        assert_eq!(attack(&g, 1.0).alive_count(), 0);
        // peers 1, 2, 3 share degree 2; the earliest goes first
        let hit = attack(&g, 0.2);
        assert!(!hit.is_alive(1));
        assert_eq!(partitions(&hit), vec![3, 1]);
        let star = attack(&OverlayGraph::star(10), 0.1);
        assert_eq!(star.edge_count(), 0);
    }

    #[test]
    fn churn_removes_exact_count() {
        let mut rng = stream_rng(2, Stream::Metrics);
        let g = OverlayGraph::complete(40);
        assert_eq!(churn(&g, 0.0, &mut rng), g);
        for f in [0.1, 0.25, 0.33, 0.9] {
            let out = churn(&g, f, &mut rng);
            assert_eq!(out.alive_count(), 40 - removal_count(40, f));
        }
    }

    #[test]
    fn head_counts_and_matrix() {
        let g = OverlayGraph::from_parts(vec![true; 4], [(2, 1), (0, 1), (3, 0)]).unwrap();
        assert_eq!(bottleneck_count(&g, 0), 0);
        assert_eq!(bottleneck_count(&g, 2), 2);
        assert_eq!(intra_head_count(&g, 2), 1);
        assert_eq!(connectivity_matrix(&g), vec![(0, 1), (0, 3), (1, 2)]);
        assert!(connectivity_matrix(&OverlayGraph::default()).is_empty());
        assert_eq!(
            connectivity_matrix(&OverlayGraph::complete(3)),
            vec![(0, 1), (0, 2), (1, 2)]
        );
    }
}
