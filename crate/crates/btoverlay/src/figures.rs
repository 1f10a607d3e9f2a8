//! Figure data: one CSV table per figure id.
//!
//! | id | columns |
//! |----|---------|
//! | `arrival-process` | t, alive mean/min/max |
//! | `peer-set-evolution` | t, avg_peer_set mean/min/max |
//! | `diameter` | t, diameter mean/min/max (0 while partitioned) |
//! | `partitions` | t, n_partitions mean/min/max |
//! | `metrics` | seed, t, avg_peer_set, diameter, n_partitions, alive |
//! | `degree-by-id` | peer_id, mean_degree, min, max, runs |
//! | `connectivity-matrix` | a, b: edge list of the first seed's probe snapshot |
//! | `robustness-attack`, `robustness-churn` | fraction, mode, n_partitions and largest_partition mean/min/max |
//! | `robustness` | seed, fraction, mode, n_partitions, largest_partition |
//! | `peer-state` | index, nated, degree, outgoing_initiated, l_tracker, l_pex (first seed, probe time) |
//! | `tracker-state` | index, nated, registered_at, last_announce, expiry_after (first seed, probe time) |

use std::collections::BTreeMap;

use btoverlay_core::metrics::MetricsSample;
use btoverlay_core::{ScenarioConfig, Simulation};

use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::runs::{run_seeds, series_summary, Probe, RemovalMode, RunDigest};
use crate::table::{fmt, Summary, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Figure {
    ArrivalProcess,
    PeerSetEvolution,
    Diameter,
    Partitions,
    Metrics,
    DegreeById,
    ConnectivityMatrix,
    RobustnessSummary(RemovalMode),
    Robustness,
    PeerState,
    TrackerState,
}

impl Figure {
    pub const ALL: [Figure; 12] = [
        Figure::ArrivalProcess,
        Figure::PeerSetEvolution,
        Figure::Diameter,
        Figure::Partitions,
        Figure::Metrics,
        Figure::DegreeById,
        Figure::ConnectivityMatrix,
        Figure::RobustnessSummary(RemovalMode::Attack),
        Figure::RobustnessSummary(RemovalMode::Churn),
        Figure::Robustness,
        Figure::PeerState,
        Figure::TrackerState,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::ArrivalProcess => "arrival-process",
            Figure::PeerSetEvolution => "peer-set-evolution",
            Figure::Diameter => "diameter",
            Figure::Partitions => "partitions",
            Figure::Metrics => "metrics",
            Figure::DegreeById => "degree-by-id",
            Figure::ConnectivityMatrix => "connectivity-matrix",
            Figure::RobustnessSummary(RemovalMode::Attack) => "robustness-attack",
            Figure::RobustnessSummary(RemovalMode::Churn) => "robustness-churn",
            Figure::Robustness => "robustness",
            Figure::PeerState => "peer-state",
            Figure::TrackerState => "tracker-state",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.id() == id).ok_or_else(|| Error::UnknownFigure {
            name: id.to_owned(),
            known: Self::ALL.map(Figure::id).to_vec(),
        })
    }

    pub fn describe(self) -> &'static str {
        match self {
            Figure::ArrivalProcess => "alive peers over time",
            Figure::PeerSetEvolution => "average peer set size over time",
            Figure::Diameter => "sampled diameter over time",
            Figure::Partitions => "number of partitions over time",
            Figure::Metrics => "per-seed metrics time series",
            Figure::DegreeById => "peer set size by arrival order at the probe instant",
            Figure::ConnectivityMatrix => "edge list at the probe instant, first seed",
            Figure::RobustnessSummary(RemovalMode::Attack) => "partitions after removing top-degree peers",
            Figure::RobustnessSummary(RemovalMode::Churn) => "partitions after removing random peers",
            Figure::Robustness => "per-seed removal census",
            Figure::PeerState => "per-peer protocol state, first seed",
            Figure::TrackerState => "tracker registrations, first seed",
        }
    }
}

/// A scenario run over several seeds, with its probe settings.
#[derive(Clone, Debug)]
pub struct Batch {
    pub config: ScenarioConfig,
    pub probe: Probe,
    pub runs: Vec<RunDigest>,
}

impl Batch {
    pub fn run(config: ScenarioConfig, seeds: &[u64], probe: Probe) -> Result<Self> {
        let probe = Probe {
            keep_edges: true,
            ..probe
        };
        let runs = run_seeds(&config, seeds, &probe)?;
        Ok(Self { config, probe, runs })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    /// `#` header: figure id, probe settings and the resolved experiment.
    pub fn provenance(&self, figure: &str) -> Result<String> {
        let exp = Experiment {
            seeds: Some(self.seeds()),
            scenario: self.config.clone(),
            ..Experiment::default()
        };
        Ok(format!(
            "figure = \"{figure}\"\nprobe_secs = {}\nhead_size = {}\n{}",
            fmt(self.probe.at_secs),
            self.probe.head_size,
            exp.to_toml()?
        ))
    }
}

fn summary_series(runs: &[RunDigest], name: &str, metric: impl Fn(&MetricsSample) -> f64) -> Table {
    let mut t = Table::new(["t".to_owned(), format!("{name}_mean"), format!("{name}_min"), format!("{name}_max"), "runs".to_owned()]);
    for (at, s) in series_summary(runs, metric) {
        let [mean, min, max] = s.cells();
        t.push([fmt(at), mean, min, max, s.count.to_string()]);
    }
    t
}

/// Table for one figure of a batch, with provenance metadata.
pub fn export_figure_data(batch: &Batch, figure: Figure) -> Result<Table> {
    let runs = &batch.runs;
    let first = runs.first().ok_or(Error::NoSeeds)?;
    let mut table = match figure {
        Figure::ArrivalProcess => summary_series(runs, "alive", |m| f64::from(m.alive)),
        Figure::PeerSetEvolution => summary_series(runs, "avg_peer_set", |m| m.avg_peer_set),
        Figure::Diameter => summary_series(runs, "diameter", |m| f64::from(m.diameter)),
        Figure::Partitions => summary_series(runs, "n_partitions", |m| m.num_partitions() as f64),
        Figure::Metrics => {
            let mut t = Table::new(["seed", "t", "avg_peer_set", "diameter", "n_partitions", "alive"]);
            for r in runs {
                for m in &r.series {
                    t.push([
                        r.seed.to_string(),
                        fmt(m.t),
                        fmt(m.avg_peer_set),
                        m.diameter.to_string(),
                        m.num_partitions().to_string(),
                        m.alive.to_string(),
                    ]);
                }
            }
            t
        }
        Figure::DegreeById => {
            let mut by_peer: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for r in runs {
                for &(p, d) in &r.degrees {
                    by_peer.entry(p).or_default().push(f64::from(d));
                }
            }
            let mut t = Table::new(["peer_id", "mean_degree", "min", "max", "runs"]);
            for (p, ds) in by_peer {
                let s = Summary::of(ds).expect("nonempty");
                let [mean, min, max] = s.cells();
                t.push([p.to_string(), mean, min, max, s.count.to_string()]);
            }
            t
        }
        Figure::ConnectivityMatrix => {
            let mut t = Table::new(["a", "b"]);
            for &(a, b) in first.edges.as_deref().unwrap_or_default() {
                t.push([a, b]);
            }
            t.note(format!("seed = {}", first.seed));
            t
        }
        Figure::RobustnessSummary(mode) => {
            let mut t = Table::new([
                "fraction",
                "mode",
                "n_partitions_mean",
                "n_partitions_min",
                "n_partitions_max",
                "largest_partition_mean",
                "largest_partition_min",
                "largest_partition_max",
                "runs",
            ]);
            for (i, &fraction) in batch.probe.fractions.iter().enumerate() {
                let at: Vec<_> = runs.iter().map(|r| r.removals(mode)[i]).collect();
                let parts = Summary::of(at.iter().map(|r| r.n_partitions as f64)).expect("nonempty");
                let largest = Summary::of(at.iter().map(|r| f64::from(r.largest))).expect("nonempty");
                let mut row = vec![fmt(fraction), mode.name().to_owned()];
                row.extend(parts.cells());
                row.extend(largest.cells());
                row.push(at.len().to_string());
                t.push(row);
            }
            t
        }
        Figure::Robustness => {
            let mut t = Table::new(["seed", "fraction", "mode", "n_partitions", "largest_partition"]);
            for r in runs {
                for mode in RemovalMode::ALL {
                    for x in r.removals(mode) {
                        t.push([
                            r.seed.to_string(),
                            fmt(x.fraction),
                            mode.name().to_owned(),
                            x.n_partitions.to_string(),
                            x.largest.to_string(),
                        ]);
                    }
                }
            }
            t
        }
        Figure::PeerState | Figure::TrackerState => {
            let mut sim = Simulation::new(ScenarioConfig {
                seed: first.seed,
                ..batch.config.clone()
            })?;
            sim.advance_to(batch.probe.at_secs);
            let mut t = if figure == Figure::PeerState {
                let mut t = Table::new(["index", "nated", "degree", "outgoing_initiated", "l_tracker", "l_pex"]);
                for d in sim.torrent().dump() {
                    t.push([
                        d.index.to_string(),
                        d.nated.to_string(),
                        d.degree.to_string(),
                        d.outgoing_initiated.to_string(),
                        d.l_tracker.to_string(),
                        d.l_pex.to_string(),
                    ]);
                }
                t
            } else {
                let mut t = Table::new(["index", "nated", "registered_at", "last_announce", "expiry_after"]);
                let mut regs: Vec<_> = sim.torrent().tracker().registrations().collect();
                regs.sort_by_key(|(p, _)| *p);
                for (p, r) in regs {
                    t.push([
                        p.to_string(),
                        r.nated.to_string(),
                        fmt(r.registered_at),
                        fmt(r.last_announce),
                        fmt(r.expiry_after),
                    ]);
                }
                t
            };
            t.note(format!("seed = {}", first.seed));
            t
        }
    };
    let mut meta = Table::default();
    meta.note(batch.provenance(figure.id())?);
    meta.metadata.append(&mut table.metadata);
    table.metadata = meta.metadata;
    Ok(table)
}
