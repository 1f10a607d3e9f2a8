//! Multi-seed execution of a scenario and the per-run measurements every
//! experiment draws from.

use btoverlay_core::graph::OverlayGraph;
use btoverlay_core::metrics::{
    attack, bottleneck_count, churn, degree_by_arrival, intra_head_count, measure, partitions, MetricsSample,
};
use btoverlay_core::rng::{stream_rng, SimRng, Stream};
use btoverlay_core::{run_scenario, PeerIndex, ScenarioConfig, Seconds};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::table::Summary;

/// Instant of the single-snapshot measurements (10 minutes).
pub const PROBE_SECS: Seconds = 600.0;
/// Number of earliest arrivals treated as the overlay's head.
pub const HEAD_SIZE: u32 = 80;

/// Removal fractions 0, 0.05, ..., 0.95.
pub fn removal_grid() -> Vec<f64> {
    (0..20).map(|k| f64::from(k) * 0.05).collect()
}

/// What to measure on each run besides the metrics time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub at_secs: Seconds,
    pub head_size: u32,
    pub fractions: Vec<f64>,
    /// Keep the edge list of the probe snapshot.
    pub keep_edges: bool,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            at_secs: PROBE_SECS,
            head_size: HEAD_SIZE,
            fractions: removal_grid(),
            keep_edges: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RemovalMode {
    /// Highest degree first.
    Attack,
    /// Uniformly at random.
    Churn,
}

impl RemovalMode {
    pub const ALL: [RemovalMode; 2] = [RemovalMode::Attack, RemovalMode::Churn];

    pub fn name(self) -> &'static str {
        match self {
            RemovalMode::Attack => "attack",
            RemovalMode::Churn => "churn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn apply(self, g: &OverlayGraph, fraction: f64, rng: &mut SimRng) -> OverlayGraph {
        match self {
            RemovalMode::Attack => attack(g, fraction),
            RemovalMode::Churn => churn(g, fraction, rng),
        }
    }
}

/// Partition census after removing a fraction of the peers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Removal {
    pub fraction: f64,
    pub n_partitions: usize,
    /// Size of the largest component, 0 when nobody is left.
    pub largest: u32,
    pub survivors: u32,
}

impl Removal {
    /// Share of survivors in the largest component (1 when nobody is left).
    pub fn largest_share(&self) -> f64 {
        if self.survivors == 0 {
            1.0
        } else {
            f64::from(self.largest) / f64::from(self.survivors)
        }
    }
}

/// Removal census over `fractions`, each applied to the intact snapshot.
pub fn removal_sweep(g: &OverlayGraph, mode: RemovalMode, fractions: &[f64], rng: &mut SimRng) -> Result<Vec<Removal>> {
    fractions
        .iter()
        .map(|&fraction| {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Fraction(fraction));
            }
            let left = mode.apply(g, fraction, rng);
            let sizes = partitions(&left);
            Ok(Removal {
                fraction,
                n_partitions: sizes.len(),
                largest: sizes.first().copied().unwrap_or(0),
                survivors: left.alive_count() as u32,
            })
        })
        .collect()
}

/// Smallest fraction whose removal leaves more than one partition.
pub fn first_split(removals: &[Removal]) -> Option<f64> {
    removals.iter().find(|r| r.n_partitions > 1).map(|r| r.fraction)
}

/// How the first `head` arrivals sit in a partitioned overlay.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeadSplit {
    /// Alive head peers.
    pub head_alive: u32,
    /// Most head peers found together in one component that is not the
    /// whole overlay; 0 when the overlay is connected.
    pub detached: u32,
}

impl HeadSplit {
    pub fn share(&self) -> f64 {
        if self.head_alive == 0 {
            0.0
        } else {
            f64::from(self.detached) / f64::from(self.head_alive)
        }
    }
}

pub fn head_split(g: &OverlayGraph, head: u32) -> HeadSplit {
    let adj = g.adjacency();
    let alive = g.alive_count();
    let mut seen = vec![false; g.num_peers_ever()];
    let mut split = HeadSplit::default();
    for root in g.alive_peers().take_while(|&p| p < head) {
        split.head_alive += 1;
        if seen[root as usize] {
            continue;
        }
        seen[root as usize] = true;
        let (mut stack, mut size, mut in_head) = (vec![root], 0usize, 0u32);
        while let Some(v) = stack.pop() {
            size += 1;
            in_head += u32::from(v < head);
            for &u in adj.neighbors(v) {
                if !std::mem::replace(&mut seen[u as usize], true) {
                    stack.push(u);
                }
            }
        }
        if size < alive {
            split.detached = split.detached.max(in_head);
        }
    }
    split
}

/// Everything retained from one seeded run.
#[derive(Clone, Debug)]
pub struct RunDigest {
    pub seed: u64,
    /// One entry per sampling instant.
    pub series: Vec<MetricsSample>,
    pub peak_population: u32,
    pub horizon: Seconds,
    /// Metrics of the probe snapshot.
    pub probe: MetricsSample,
    pub degrees: Vec<(PeerIndex, u32)>,
    pub bottleneck: usize,
    pub intra_head: usize,
    pub head: HeadSplit,
    pub attack: Vec<Removal>,
    pub churn: Vec<Removal>,
    pub edges: Option<Vec<(PeerIndex, PeerIndex)>>,
}

impl RunDigest {
    pub fn removals(&self, mode: RemovalMode) -> &[Removal] {
        match mode {
            RemovalMode::Attack => &self.attack,
            RemovalMode::Churn => &self.churn,
        }
    }

    /// Largest average peer set size over the run.
    pub fn peak_avg_peer_set(&self) -> f64 {
        self.series.iter().map(|m| m.avg_peer_set).fold(0.0, f64::max)
    }

    pub fn sample_at(&self, t: Seconds) -> Option<&MetricsSample> {
        self.series.iter().find(|m| (m.t - t).abs() < 1e-9)
    }
}

/// Runs `cfg` once with `seed` and measures it.
///
/// One metrics stream per run, consumed in order: every snapshot of the
/// series, the probe snapshot, then the churn draws.
pub fn digest(cfg: &ScenarioConfig, seed: u64, probe: &Probe) -> Result<RunDigest> {
    let result = run_scenario(ScenarioConfig {
        seed,
        ..cfg.clone()
    })?;
    let mut rng = stream_rng(seed, Stream::Metrics);
    let series: Vec<MetricsSample> = result.snapshots().map(|(t, g)| measure(&g, t, &mut rng)).collect();
    let g = result.snapshot(probe.at_secs)?;
    let probe_metrics = measure(&g, probe.at_secs, &mut rng);
    let attack = removal_sweep(&g, RemovalMode::Attack, &probe.fractions, &mut rng)?;
    let churn = removal_sweep(&g, RemovalMode::Churn, &probe.fractions, &mut rng)?;
    Ok(RunDigest {
        seed,
        peak_population: result.peak_population(),
        horizon: result.horizon,
        probe: probe_metrics,
        degrees: degree_by_arrival(&g),
        bottleneck: bottleneck_count(&g, probe.head_size),
        intra_head: intra_head_count(&g, probe.head_size),
        head: head_split(&g, probe.head_size),
        attack,
        churn,
        edges: probe.keep_edges.then(|| g.edges().to_vec()),
        series,
    })
}

/// All seeds of one scenario, in parallel; results come back in seed order.
pub fn run_seeds(cfg: &ScenarioConfig, seeds: &[u64], probe: &Probe) -> Result<Vec<RunDigest>> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    seeds.par_iter().map(|&seed| digest(cfg, seed, probe)).collect()
}

/// Per-instant summary of one metric across runs. Runs that ended earlier
/// simply stop contributing.
pub fn series_summary(runs: &[RunDigest], metric: impl Fn(&MetricsSample) -> f64) -> Vec<(Seconds, Summary)> {
    let len = runs.iter().map(|r| r.series.len()).max().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let at: Vec<&MetricsSample> = runs.iter().filter_map(|r| r.series.get(i)).collect();
            let t = at.first()?.t;
            Some((t, Summary::of(at.iter().map(|m| metric(m)))?))
        })
        .collect()
}
