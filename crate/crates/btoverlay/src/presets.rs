//! Named experiments. Each writes one directory of CSV files plus a
//! `manifest.csv` listing them.

use std::fs;
use std::path::{Path, PathBuf};

use btoverlay_core::analysis::{convergence_k, convergence_k_approx, convergence_relative_error};
use btoverlay_core::exchange::ExchangeConfig;
use btoverlay_core::ScenarioConfig;

use crate::error::{Error, Result};
use crate::experiment::{Experiment, SweepSection};
use crate::figures::{export_figure_data, Batch, Figure};
use crate::runs::{first_split, Probe, RemovalMode};
use crate::sweep::{SweepAxis, SweepOutcome, SweepSpec};
use crate::table::{fmt, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Tracker-only torrent: 1867 peers, peer set 80.
    InitialScenario,
    /// First-slot amplitude 1000, 3000 and 5000.
    TorrentSizeSweep,
    /// Peer set 20 to 200 with outgoing cap and tracker return tied to it.
    MaxPeerSetSweep,
    /// Outgoing cap 5 to 80 at peer set 80.
    MaxOutgoingSweep,
    /// NATed share 0 to 90%.
    NatSweep,
    /// 1000 peers with peer exchange, departing during the second hour.
    Pex1000,
    /// Piece exchange on random overlays with peer sets 50, 100 and 150.
    Exchange,
    /// Convergence toward the maximum peer set, exact and approximate.
    ConvergenceTable,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::InitialScenario,
        Preset::TorrentSizeSweep,
        Preset::MaxPeerSetSweep,
        Preset::MaxOutgoingSweep,
        Preset::NatSweep,
        Preset::Pex1000,
        Preset::Exchange,
        Preset::ConvergenceTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::InitialScenario => "initial-scenario",
            Preset::TorrentSizeSweep => "torrent-size-sweep",
            Preset::MaxPeerSetSweep => "maxps-sweep",
            Preset::MaxOutgoingSweep => "maxoc-sweep",
            Preset::NatSweep => "nat-sweep",
            Preset::Pex1000 => "pex-1000",
            Preset::Exchange => "exchange",
            Preset::ConvergenceTable => "convergence-table",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| Error::UnknownPreset {
            name: name.to_owned(),
            known: Self::ALL.map(Preset::name).to_vec(),
        })
    }

    /// The scenario the preset starts from.
    pub fn base(self) -> ScenarioConfig {
        match self {
            Preset::Pex1000 => ScenarioConfig::pex_1000(),
            _ => ScenarioConfig::default(),
        }
    }

    /// Axis and values of the sweeping presets.
    pub fn sweep(self) -> Option<(SweepAxis, Vec<f64>)> {
        let values = |v: &[f64]| v.to_vec();
        match self {
            Preset::TorrentSizeSweep => Some((SweepAxis::ArrivalAmplitude, values(&[1000.0, 3000.0, 5000.0]))),
            Preset::MaxPeerSetSweep => Some((SweepAxis::PeerSetTied, values(&[20.0, 40.0, 80.0, 100.0, 200.0]))),
            Preset::MaxOutgoingSweep => Some((SweepAxis::OutgoingTied, (1..=16).map(|k| f64::from(5 * k)).collect())),
            Preset::NatSweep => Some((
                SweepAxis::Scenario("nat_fraction".to_owned()),
                (0..=9).map(|k| f64::from(k) / 10.0).collect(),
            )),
            Preset::Exchange => Some((
                SweepAxis::Exchange("target_peer_set".to_owned()),
                values(&[50.0, 100.0, 150.0]),
            )),
            _ => None,
        }
    }
}

/// Inputs shared by every preset.
#[derive(Clone, Debug)]
pub struct PresetOptions {
    pub seeds: Vec<u64>,
    /// Replaces the preset's base scenario.
    pub scenario: Option<ScenarioConfig>,
    pub exchange: ExchangeConfig,
    pub snapshot_interval_secs: Option<f64>,
    pub probe: Probe,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            seeds: crate::seeds::default_seeds(10),
            scenario: None,
            exchange: ExchangeConfig::default(),
            snapshot_interval_secs: None,
            probe: Probe::default(),
        }
    }
}

impl PresetOptions {
    fn scenario(&self, preset: Preset) -> ScenarioConfig {
        let mut cfg = self.scenario.clone().unwrap_or_else(|| preset.base());
        if let Some(dt) = self.snapshot_interval_secs {
            cfg.snapshot_interval_secs = dt;
        }
        cfg
    }
}

/// Files written by a preset, relative to its directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub files: Vec<(String, String)>,
}

struct Writer {
    manifest: Manifest,
    header: String,
}

impl Writer {
    fn new(dir: PathBuf, header: String) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            manifest: Manifest {
                dir,
                files: Vec::new(),
            },
            header,
        })
    }

    fn write(&mut self, name: String, description: impl Into<String>, mut table: Table) -> Result<()> {
        if table.metadata.is_empty() {
            table.note(&self.header);
        }
        table.write_file(&self.manifest.dir.join(&name))?;
        self.manifest.files.push((name, description.into()));
        Ok(())
    }

    fn finish(self) -> Result<Manifest> {
        let mut t = Table::new(["file", "description"]);
        t.note(&self.header);
        for (f, d) in &self.manifest.files {
            t.push([f, d]);
        }
        t.write_file(&self.manifest.dir.join("manifest.csv"))?;
        Ok(self.manifest)
    }
}

/// Runs `preset` with every seed and writes its CSVs under
/// `out/<preset name>/`.
pub fn run_preset(preset: Preset, out: &Path, opts: &PresetOptions) -> Result<Manifest> {
    let exp = Experiment {
        seeds: Some(opts.seeds.clone()),
        scenario: opts.scenario(preset),
        exchange: opts.exchange.clone(),
        sweep: preset.sweep().map(|(axis, values)| SweepSection {
            axis: axis.to_string(),
            values,
        }),
    };
    if preset == Preset::ConvergenceTable {
        let mut w = Writer::new(out.join(preset.name()), header(preset.name(), &exp, &opts.probe)?)?;
        w.write("convergence.csv".into(), "exact and approximate convergence", convergence_table()?)?;
        return w.finish();
    }
    run_experiment(&exp, preset.name(), out, &opts.probe)
}

fn header(name: &str, exp: &Experiment, probe: &Probe) -> Result<String> {
    Ok(format!(
        "experiment = \"{name}\"\nprobe_secs = {}\nhead_size = {}\n{}",
        fmt(probe.at_secs),
        probe.head_size,
        exp.to_toml()?
    ))
}

/// Runs an experiment file's sweep, or its scenario when it has none, and
/// writes the CSVs under `out/<name>/`.
pub fn run_experiment(exp: &Experiment, name: &str, out: &Path, probe: &Probe) -> Result<Manifest> {
    exp.validate()?;
    let seeds = exp.seed_list()?;
    let mut w = Writer::new(out.join(name), header(name, exp, probe)?)?;
    match &exp.sweep {
        None => {
            let batch = Batch::run(exp.scenario.clone(), &seeds, probe.clone())?;
            write_batch(&mut w, &batch, "")?;
            w.write("run-summary.csv".into(), "per-seed scalar results", run_summary(&batch))?;
        }
        Some(section) => {
            let spec = SweepSpec {
                base: exp.scenario.clone(),
                exchange: exp.exchange.clone(),
                axis: SweepAxis::parse(&section.axis)?,
                values: section.values.clone(),
                seeds,
            };
            write_sweep(&mut w, &spec, probe)?;
        }
    }
    w.finish()
}

fn write_batch(w: &mut Writer, batch: &Batch, suffix: &str) -> Result<()> {
    for f in Figure::ALL {
        let table = export_figure_data(batch, f)?;
        w.write(format!("{}{suffix}.csv", f.id()), f.describe(), table)?;
    }
    Ok(())
}

fn run_summary(batch: &Batch) -> Table {
    let mut t = Table::new([
        "seed",
        "peak_population",
        "peak_avg_peer_set",
        "avg_peer_set",
        "diameter",
        "n_partitions",
        "alive",
        "bottleneck",
        "intra_head",
        "first_attack_split",
        "first_churn_split",
    ]);
    t.note(batch.provenance("run-summary").unwrap_or_default());
    for r in &batch.runs {
        let split = |m| first_split(r.removals(m)).map(fmt).unwrap_or_default();
        t.push([
            r.seed.to_string(),
            r.peak_population.to_string(),
            fmt(r.peak_avg_peer_set()),
            fmt(r.probe.avg_peer_set),
            r.probe.diameter.to_string(),
            r.probe.num_partitions().to_string(),
            r.probe.alive.to_string(),
            r.bottleneck.to_string(),
            r.intra_head.to_string(),
            split(RemovalMode::Attack),
            split(RemovalMode::Churn),
        ]);
    }
    t
}

fn write_sweep(w: &mut Writer, spec: &SweepSpec, probe: &Probe) -> Result<()> {
    let outcome = spec.run(probe)?;
    w.write("runs.csv".into(), "one row per value and seed", outcome.runs_table(&spec.axis))?;
    w.write("summary.csv".into(), "mean, min and max across seeds", outcome.summary_table(&spec.axis))?;
    match &outcome {
        SweepOutcome::Scenario(_) => {
            for (value, runs) in outcome.scenario_groups() {
                let batch = Batch {
                    config: spec.axis.scenario(&spec.base, value)?,
                    probe: probe.clone(),
                    runs: runs.into_iter().cloned().collect(),
                };
                let suffix = format!("-{}-{}", spec.axis, fmt(value));
                for f in [
                    Figure::ArrivalProcess,
                    Figure::PeerSetEvolution,
                    Figure::Diameter,
                    Figure::Partitions,
                    Figure::DegreeById,
                    Figure::RobustnessSummary(RemovalMode::Attack),
                    Figure::RobustnessSummary(RemovalMode::Churn),
                ] {
                    let table = export_figure_data(&batch, f)?;
                    w.write(format!("{}{suffix}.csv", f.id()), format!("{} at {} = {}", f.describe(), spec.axis, fmt(value)), table)?;
                }
            }
        }
        SweepOutcome::Exchange(_) => {
            for (value, runs) in outcome.exchange_groups() {
                let first = runs[0];
                let mut t = Table::new(["round", "peer", "pieces_held"]);
                for (r, held) in first.outcome.pieces_held.iter().enumerate() {
                    for (p, &n) in held.iter().enumerate() {
                        t.push([r + 1, p, usize::from(n)]);
                    }
                }
                t.note(&w.header);
                t.note(format!("seed = {}", first.seed));
                w.write(
                    format!("pieces-{}-{}.csv", spec.axis, fmt(value)),
                    format!("pieces held per round at {} = {}, first seed", spec.axis, fmt(value)),
                    t,
                )?;
            }
        }
    }
    Ok(())
}

/// Starting sizes reported by the convergence preset.
pub const CONVERGENCE_SIZES: [u64; 13] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000, 20_000, 50_000, 100_000];

pub fn convergence_table() -> Result<Table> {
    let mut t = Table::new(["n_start", "k_exact", "k_approx", "rel_error_pct"]);
    for n in CONVERGENCE_SIZES {
        t.push([
            n.to_string(),
            convergence_k(n)?.to_string(),
            fmt(convergence_k_approx(n)),
            fmt(100.0 * convergence_relative_error(n)?),
        ]);
    }
    Ok(t)
}
