use btoverlay_core::metrics::average_peer_set_size;
use btoverlay_core::peer::Change;
use btoverlay_core::{run_scenario, ArrivalLaw, LifetimeLaw, ScenarioConfig, Simulation};
use proptest::prelude::*;

fn small_scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        2u32..24,
        any::<prop::sample::Index>(),
        1u32..30,
        0.0f64..0.8,
        any::<bool>(),
        any::<bool>(),
        20.0f64..120.0,
        any::<u64>(),
    )
        .prop_map(|(peer_set, outgoing, sigma, nat, pex, announce, amplitude, seed)| {
            let max_outgoing = 1 + outgoing.index(peer_set as usize) as u32;
            ScenarioConfig {
                max_peer_set: peer_set,
                max_outgoing,
                tracker_return_count: sigma,
                recontact_threshold: (peer_set / 2).max(1),
                nat_fraction: nat,
                pex_enabled: pex,
                pex_nat_blocks: seed % 2 == 0,
                announce_enabled: announce,
                announce_interval_mins: 5.0,
                announce_expiry_mins: (4.0, 8.0),
                arrival_law: ArrivalLaw::ExponentialSlots {
                    amplitude,
                    rate: 0.7,
                    slot_minutes: 2.0,
                    num_slots: 3,
                },
                lifetime_law: LifetimeLaw::UniformMinutes {
                    lo_mins: 2.0,
                    hi_mins: 6.0,
                },
                snapshot_interval_secs: 30.0,
                seed,
                ..ScenarioConfig::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invariants_hold_after_every_event(cfg in small_scenario()) {
        let mut sim = Simulation::new(cfg).unwrap();
        while sim.step().is_some() {
            prop_assert_eq!(sim.check_invariants(), Ok(()));
        }
    }

    #[test]
    fn snapshots_respect_caps_and_conserve_degree(cfg in small_scenario()) {
        let (cap, out_cap) = (cfg.max_peer_set, cfg.max_outgoing);
        let r = run_scenario(cfg).unwrap();
        for (_, g) in r.snapshots() {
            prop_assert!(g.check_degree_cap(cap).is_ok());
            let deg = g.degrees();
            prop_assert_eq!(deg.iter().map(|&d| d as usize).sum::<usize>(), 2 * g.edge_count());
            for &(a, b) in g.edges() {
                prop_assert!(a < b && g.is_alive(a) && g.is_alive(b));
            }
            let mean = g.alive_peers().map(|p| f64::from(deg[p as usize])).sum::<f64>()
                / g.alive_count().max(1) as f64;
            prop_assert!((mean - average_peer_set_size(&g)).abs() < 1e-9);
        }
        // replaying the log: nobody initiates beyond the outgoing cap
        let mut initiated = vec![0u32; r.num_peers()];
        let mut links = std::collections::BTreeMap::new();
        for e in &r.log {
            match e.change {
                Change::Connect { initiator, target, .. } => {
                    initiated[initiator as usize] += 1;
                    prop_assert!(initiated[initiator as usize] <= out_cap);
                    links.insert((initiator.min(target), initiator.max(target)), initiator);
                }
                Change::Disconnect { a, b } => {
                    let who = links.remove(&(a.min(b), a.max(b))).expect("known link");
                    initiated[who as usize] -= 1;
                }
                _ => {}
            }
        }
    }

    #[test]
    fn nated_peers_never_accept(cfg in small_scenario()) {
        let blocks = cfg.pex_nat_blocks || !cfg.pex_enabled;
        let r = run_scenario(cfg).unwrap();
        for e in &r.log {
            if let Change::Connect { target, .. } = e.change {
                if blocks {
                    prop_assert!(!r.plan[target as usize].nated);
                }
            }
        }
    }

    #[test]
    fn runs_are_reproducible(cfg in small_scenario()) {
        let a = run_scenario(cfg.clone()).unwrap();
        let b = run_scenario(cfg).unwrap();
        prop_assert_eq!(a.log, b.log);
        prop_assert_eq!(a.samples, b.samples);
    }
}

#[test]
fn seeds_change_the_run_and_workload_ignores_protocol() {
    let a = run_scenario(ScenarioConfig { seed: 3, ..ScenarioConfig::default() }).unwrap();
    let b = run_scenario(ScenarioConfig { seed: 4, ..ScenarioConfig::default() }).unwrap();
    assert_ne!(a.log, b.log);
    // the workload stream does not depend on protocol parameters
    let c = run_scenario(ScenarioConfig { seed: 3, max_outgoing: 20, ..ScenarioConfig::default() }).unwrap();
    assert_eq!(a.plan, c.plan);
}

#[test]
fn population_follows_the_plan() {
    let r = run_scenario(ScenarioConfig::default()).unwrap();
    assert_eq!(r.num_peers(), 1867);
    for s in &r.samples {
        let expected = r.plan.iter().filter(|p| p.arrival <= s.t && p.departure > s.t).count();
        assert_eq!(s.alive as usize, expected, "t = {}", s.t);
    }
    assert_eq!(r.samples.last().unwrap().alive, 0);
}
