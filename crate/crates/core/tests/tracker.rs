use btoverlay_core::rng::{stream_rng, Stream};
use btoverlay_core::tracker::Tracker;
use btoverlay_core::workload::plan_peers;
use btoverlay_core::{ArrivalLaw, ScenarioConfig};
use proptest::prelude::*;
use std::collections::BTreeSet;

proptest! {
    #[test]
    fn responses_follow_the_contract(
        flags in prop::collection::vec(any::<bool>(), 1..300),
        sigma in 1u32..80,
        seed in any::<u64>(),
    ) {
        let mut rng = stream_rng(seed, Stream::Tracker);
        let mut tracker = Tracker::new(sigma, (1800.0, 2700.0));
        for (p, &nated) in flags.iter().enumerate() {
            tracker.register_peer(p as u32, nated, 0.0, &mut rng).unwrap();
        }
        prop_assert_eq!(tracker.check_invariants(), Ok(()));
        let open: BTreeSet<u32> = (0..flags.len() as u32).filter(|&p| !flags[p as usize]).collect();
        for requester in 0..flags.len() as u32 {
            let got = tracker.request_peers(requester, &mut rng);
            let distinct: BTreeSet<u32> = got.iter().copied().collect();
            prop_assert_eq!(distinct.len(), got.len());
            prop_assert!(!distinct.contains(&requester));
            prop_assert!(distinct.is_subset(&open));
            let available = open.len() - usize::from(open.contains(&requester));
            prop_assert_eq!(got.len(), available.min(sigma as usize));
        }
    }

    #[test]
    fn deregistered_peers_disappear(n in 2u32..100, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, Stream::Tracker);
        let mut tracker = Tracker::new(n, (1800.0, 2700.0));
        for p in 0..n {
            tracker.register_peer(p, false, 0.0, &mut rng).unwrap();
        }
        for p in (0..n).step_by(2) {
            tracker.deregister(p).unwrap();
        }
        let got = tracker.request_peers(n, &mut rng);
        prop_assert_eq!(got.len(), (n / 2) as usize);
        prop_assert!(got.iter().all(|p| p % 2 == 1));
    }
}

#[test]
fn every_open_peer_is_equally_likely() {
    // 20 candidates, 5 per response: each should appear in a quarter of them
    let mut rng = stream_rng(9, Stream::Tracker);
    let mut tracker = Tracker::new(5, (1800.0, 2700.0));
    for p in 0..21 {
        tracker.register_peer(p, false, 0.0, &mut rng).unwrap();
    }
    let draws = 20_000;
    let mut hits = [0u32; 21];
    for _ in 0..draws {
        for p in tracker.request_peers(20, &mut rng) {
            hits[p as usize] += 1;
        }
    }
    assert_eq!(hits[20], 0);
    let expected = f64::from(draws) * 5.0 / 20.0;
    let chi2: f64 = hits[..20]
        .iter()
        .map(|&h| (f64::from(h) - expected).powi(2) / expected)
        .sum();
    // 19 degrees of freedom, 0.1% critical value 43.82
    assert!(chi2 < 43.82, "chi2 = {chi2}");
}

#[test]
fn nat_flags_are_binomial() {
    let cfg = ScenarioConfig {
        nat_fraction: 0.5,
        arrival_law: ArrivalLaw::ExplicitSchedule {
            times_secs: (0..1000).map(f64::from).collect(),
        },
        ..ScenarioConfig::default()
    };
    let mut chi2 = 0.0;
    for seed in 1..=10 {
        let plan = plan_peers(&cfg, &mut stream_rng(seed, Stream::Workload));
        let mut rng = stream_rng(seed, Stream::Tracker);
        let mut tracker = Tracker::new(50, (1800.0, 2700.0));
        for (p, peer) in plan.iter().enumerate() {
            tracker.register_peer(p as u32, peer.nated, peer.arrival, &mut rng).unwrap();
        }
        let nated = tracker.nated_count() as f64;
        assert_eq!(tracker.nated_count() + tracker.not_nated_count(), 1000);
        chi2 += (nated - 500.0).powi(2) / 250.0;
    }
    // 10 degrees of freedom, 0.1% critical value 29.59
    assert!(chi2 < 29.59, "chi2 = {chi2}");
}

#[test]
fn stale_registrations_expire_within_the_drawn_threshold() {
    let mut rng = stream_rng(2, Stream::Tracker);
    let mut tracker = Tracker::new(50, (1800.0, 2700.0));
    for p in 0..200 {
        tracker.register_peer(p, false, 0.0, &mut rng).unwrap();
    }
    assert!(tracker.expire_stale(1799.0).is_empty());
    let mid = tracker.expire_stale(2250.0).len();
    assert!((60..140).contains(&mid), "{mid}");
    tracker.expire_stale(2700.0);
    assert_eq!(tracker.registered_count(), 0);
}
