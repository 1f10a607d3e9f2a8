use btoverlay_core::metrics::{
    attack, bottleneck_count, churn, diameter_estimate, intra_head_count, partitions, removal_count,
};
use btoverlay_core::rng::{stream_rng, Stream};
use btoverlay_core::OverlayGraph;
use proptest::prelude::*;

fn graph() -> impl Strategy<Value = OverlayGraph> {
    (1usize..200).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n as u32, 0..n as u32), 0..4 * n);
        let alive = prop::collection::vec(prop::bool::weighted(0.9), n);
        (alive, edges).prop_map(|(alive, edges)| {
            let edges: std::collections::BTreeSet<_> = edges
                .into_iter()
                .filter(|&(a, b)| a != b && alive[a as usize] && alive[b as usize])
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            OverlayGraph::from_parts(alive, edges).unwrap()
        })
    })
}

/// All-pairs shortest paths; `None` when some pair is unreachable.
fn exact_diameter(g: &OverlayGraph) -> Option<u32> {
    let n = g.num_peers_ever();
    let inf = u32::MAX / 2;
    let mut d = vec![vec![inf; n]; n];
    let alive: Vec<usize> = g.alive_peers().map(|p| p as usize).collect();
    for &v in &alive {
        d[v][v] = 0;
    }
    for &(a, b) in g.edges() {
        d[a as usize][b as usize] = 1;
        d[b as usize][a as usize] = 1;
    }
    for &k in &alive {
        for &i in &alive {
            for &j in &alive {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let mut best = 0;
    for &i in &alive {
        for &j in &alive {
            if d[i][j] >= inf {
                return None;
            }
            best = best.max(d[i][j]);
        }
    }
    Some(best)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn full_sample_diameter_is_exact(g in graph(), seed in any::<u64>()) {
        let mut rng = stream_rng(seed, Stream::Metrics);
        let sampled = diameter_estimate(&g, 1000, &mut rng);
        let expected = match exact_diameter(&g) {
            Some(d) if g.alive_count() > 1 => d,
            _ => 0,
        };
        prop_assert_eq!(sampled, expected);
    }

    #[test]
    fn partial_sample_never_overshoots(g in graph(), k in 1usize..20, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, Stream::Metrics);
        let sampled = diameter_estimate(&g, k, &mut rng);
        prop_assert!(sampled <= exact_diameter(&g).unwrap_or(0));
    }

    #[test]
    fn partitions_conserve_peers(g in graph()) {
        let sizes = partitions(&g);
        prop_assert_eq!(sizes.iter().map(|&s| s as usize).sum::<usize>(), g.alive_count());
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(sizes.len() == 1, exact_diameter(&g).is_some() && g.alive_count() > 0);
    }

    #[test]
    fn removals_are_exact(g in graph(), f in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = removal_count(g.alive_count(), f);
        let hit = attack(&g, f);
        prop_assert_eq!(hit.alive_count(), g.alive_count() - k);
        let mut rng = stream_rng(seed, Stream::Metrics);
        let shaken = churn(&g, f, &mut rng);
        prop_assert_eq!(shaken.alive_count(), g.alive_count() - k);
        for out in [&hit, &shaken] {
            prop_assert!(out.edges().iter().all(|e| g.edges().contains(e)));
            prop_assert!(out.edges().iter().all(|&(a, b)| out.is_alive(a) && out.is_alive(b)));
        }
        // attack removes a set of maximum-degree peers
        let deg = g.degrees();
        let removed_min = g.alive_peers().filter(|&p| !hit.is_alive(p)).map(|p| deg[p as usize]).min();
        let kept_max = hit.alive_peers().map(|p| deg[p as usize]).max();
        if let (Some(lo), Some(hi)) = (removed_min, kept_max) {
            prop_assert!(lo >= hi);
        }
    }

    #[test]
    fn head_counts_split_the_edges(g in graph(), head in 0u32..200) {
        let inside_only = g.edges().iter().filter(|&&(a, b)| a >= head && b >= head).count();
        prop_assert_eq!(
            bottleneck_count(&g, head) + intra_head_count(&g, head) + inside_only,
            g.edge_count()
        );
    }
}
