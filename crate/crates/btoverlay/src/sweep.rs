//! One-parameter sweeps over scenario or exchange settings.

use std::fmt;

use btoverlay_core::exchange::{run_exchange, ExchangeConfig, ExchangeOutcome};
use btoverlay_core::{ArrivalLaw, ScenarioConfig};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::runs::{digest, first_split, Probe, RemovalMode, RunDigest};
use crate::table::{fmt, Summary, Table};

/// The parameter a sweep varies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Any scalar field of [`ScenarioConfig`], by name.
    Scenario(String),
    /// Any scalar field of [`ExchangeConfig`], written `exchange.<field>`.
    Exchange(String),
    /// `max_peer_set` with `max_outgoing = Δ/2` and
    /// `tracker_return_count = (Δ + max_outgoing)/2`.
    PeerSetTied,
    /// `max_outgoing` with `tracker_return_count = (Δ + max_outgoing)/2`.
    OutgoingTied,
    /// Amplitude of the exponential slot arrival law (peers in slot one).
    ArrivalAmplitude,
}

impl SweepAxis {
    pub const PEER_SET_TIED: &'static str = "max_peer_set_tied";
    pub const OUTGOING_TIED: &'static str = "max_outgoing_tied";
    pub const ARRIVAL_AMPLITUDE: &'static str = "arrival_amplitude";

    pub fn parse(name: &str) -> Result<Self> {
        let axis = match name {
            Self::PEER_SET_TIED => Self::PeerSetTied,
            Self::OUTGOING_TIED => Self::OutgoingTied,
            Self::ARRIVAL_AMPLITUDE => Self::ArrivalAmplitude,
            _ => match name.split_once('.') {
                Some(("exchange", field)) => Self::Exchange(field.to_owned()),
                Some(("scenario", field)) => Self::Scenario(field.to_owned()),
                Some(_) => return Err(Error::UnknownAxis(name.to_owned())),
                None => Self::Scenario(name.to_owned()),
            },
        };
        match &axis {
            Self::Scenario(f) if !has_scalar(&ScenarioConfig::default(), f) => Err(Error::UnknownAxis(name.to_owned())),
            Self::Exchange(f) if !has_scalar(&ExchangeConfig::default(), f) => Err(Error::UnknownAxis(name.to_owned())),
            _ => Ok(axis),
        }
    }

    pub fn is_exchange(&self) -> bool {
        matches!(self, Self::Exchange(_))
    }

    /// Scenario at one sweep point.
    pub fn scenario(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let bad = |reason: &str| Error::AxisValue {
            axis: self.to_string(),
            reason: reason.to_owned(),
        };
        let whole = || {
            (value.fract() == 0.0 && (0.0..=f64::from(u32::MAX)).contains(&value))
                .then_some(value as u32)
                .ok_or_else(|| bad("value must be a non-negative integer"))
        };
        let cfg = match self {
            Self::Scenario(field) => set_field(base, field, value).map_err(|r| bad(&r))?,
            Self::PeerSetTied => base.clone().with_peer_set(whole()?),
            Self::OutgoingTied => base.clone().with_outgoing(whole()?),
            Self::ArrivalAmplitude => {
                let mut cfg = base.clone();
                match &mut cfg.arrival_law {
                    ArrivalLaw::ExponentialSlots { amplitude, .. } => *amplitude = value,
                    ArrivalLaw::ExplicitSchedule { .. } => return Err(bad("needs the exponential slot arrival law")),
                }
                cfg
            }
            Self::Exchange(_) => base.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Exchange setup at one sweep point.
    pub fn exchange(&self, base: &ExchangeConfig, value: f64) -> Result<ExchangeConfig> {
        let cfg = match self {
            Self::Exchange(field) => set_field(base, field, value).map_err(|reason| Error::AxisValue {
                axis: self.to_string(),
                reason,
            })?,
            _ => base.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Scenario(field) => f.write_str(field),
            Self::Exchange(field) => write!(f, "exchange.{field}"),
            Self::PeerSetTied => f.write_str(Self::PEER_SET_TIED),
            Self::OutgoingTied => f.write_str(Self::OUTGOING_TIED),
            Self::ArrivalAmplitude => f.write_str(Self::ARRIVAL_AMPLITUDE),
        }
    }
}

fn has_scalar<T: Serialize>(cfg: &T, field: &str) -> bool {
    let value = toml::Value::try_from(cfg).expect("configs serialize");
    matches!(
        value.get(field),
        Some(toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_))
    )
}

/// Sets one scalar field by name, keeping its type.
fn set_field<T: Serialize + DeserializeOwned>(cfg: &T, field: &str, value: f64) -> Result<T, String> {
    let mut table = toml::Value::try_from(cfg).map_err(|e| e.to_string())?;
    let slot = table.get_mut(field).ok_or("no such field")?;
    *slot = match slot {
        toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9e15 => toml::Value::Integer(value as i64),
        toml::Value::Integer(_) => return Err(format!("{value} is not an integer")),
        toml::Value::Float(_) => toml::Value::Float(value),
        toml::Value::Boolean(_) if value == 0.0 || value == 1.0 => toml::Value::Boolean(value == 1.0),
        toml::Value::Boolean(_) => return Err("boolean fields take 0 or 1".to_owned()),
        _ => return Err("not a scalar field".to_owned()),
    };
    table.try_into().map_err(|e: toml::de::Error| e.message().to_owned())
}

/// A declarative sweep: every value of `axis` runs with every seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub exchange: ExchangeConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::EmptySweep);
        }
        if self.seeds.is_empty() {
            return Err(Error::NoSeeds);
        }
        for &v in &self.values {
            self.axis.scenario(&self.base, v)?;
            self.axis.exchange(&self.exchange, v)?;
        }
        Ok(())
    }

    pub fn run(&self, probe: &Probe) -> Result<SweepOutcome> {
        self.validate()?;
        let jobs: Vec<(f64, u64)> = self
            .values
            .iter()
            .flat_map(|&v| self.seeds.iter().map(move |&s| (v, s)))
            .collect();
        if self.axis.is_exchange() {
            let runs = jobs
                .par_iter()
                .map(|&(value, seed)| {
                    let cfg = ExchangeConfig {
                        seed,
                        ..self.axis.exchange(&self.exchange, value)?
                    };
                    Ok(ExchangePoint {
                        value,
                        seed,
                        outcome: run_exchange(&cfg)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepOutcome::Exchange(runs))
        } else {
            let runs = jobs
                .par_iter()
                .map(|&(value, seed)| {
                    let cfg = self.axis.scenario(&self.base, value)?;
                    Ok(ScenarioPoint {
                        value,
                        run: digest(&cfg, seed, probe)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepOutcome::Scenario(runs))
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioPoint {
    pub value: f64,
    pub run: RunDigest,
}

#[derive(Clone, Debug)]
pub struct ExchangePoint {
    pub value: f64,
    pub seed: u64,
    pub outcome: ExchangeOutcome,
}

/// Sweep results in (value, seed) order.
#[derive(Clone, Debug)]
pub enum SweepOutcome {
    Scenario(Vec<ScenarioPoint>),
    Exchange(Vec<ExchangePoint>),
}

impl SweepOutcome {
    /// Runs at each value, in sweep order.
    pub fn scenario_groups(&self) -> Vec<(f64, Vec<&RunDigest>)> {
        let mut groups: Vec<(f64, Vec<&RunDigest>)> = Vec::new();
        if let SweepOutcome::Scenario(points) = self {
            for p in points {
                match groups.last_mut() {
                    Some((v, runs)) if *v == p.value => runs.push(&p.run),
                    _ => groups.push((p.value, vec![&p.run])),
                }
            }
        }
        groups
    }

    pub fn exchange_groups(&self) -> Vec<(f64, Vec<&ExchangePoint>)> {
        let mut groups: Vec<(f64, Vec<&ExchangePoint>)> = Vec::new();
        if let SweepOutcome::Exchange(points) = self {
            for p in points {
                match groups.last_mut() {
                    Some((v, runs)) if *v == p.value => runs.push(p),
                    _ => groups.push((p.value, vec![p])),
                }
            }
        }
        groups
    }

    /// One row per (value, seed).
    pub fn runs_table(&self, axis: &SweepAxis) -> Table {
        match self {
            SweepOutcome::Scenario(points) => {
                let mut t = Table::new(
                    [
                        axis.to_string().as_str(),
                        "seed",
                        "avg_peer_set",
                        "peak_avg_peer_set",
                        "diameter",
                        "n_partitions",
                        "alive",
                        "peak_population",
                        "bottleneck",
                        "intra_head",
                        "head_detached_share",
                        "first_attack_split",
                        "first_churn_split",
                    ]
                    .map(str::to_owned),
                );
                let split = |r: &RunDigest, m| first_split(r.removals(m)).map(fmt).unwrap_or_default();
                for p in points {
                    let r = &p.run;
                    t.push([
                        fmt(p.value),
                        r.seed.to_string(),
                        fmt(r.probe.avg_peer_set),
                        fmt(r.peak_avg_peer_set()),
                        r.probe.diameter.to_string(),
                        r.probe.num_partitions().to_string(),
                        r.probe.alive.to_string(),
                        r.peak_population.to_string(),
                        r.bottleneck.to_string(),
                        r.intra_head.to_string(),
                        fmt(r.head.share()),
                        split(r, RemovalMode::Attack),
                        split(r, RemovalMode::Churn),
                    ]);
                }
                t
            }
            SweepOutcome::Exchange(points) => {
                let mut t = Table::new([axis.to_string().as_str(), "seed", "mean_completion_secs", "incomplete", "rounds"]);
                for p in points {
                    t.push([
                        fmt(p.value),
                        p.seed.to_string(),
                        p.outcome.mean_completion_secs().map(fmt).unwrap_or_default(),
                        p.outcome.incomplete().to_string(),
                        p.outcome.rounds.to_string(),
                    ]);
                }
                t
            }
        }
    }

    /// Mean, min and max across seeds at each value.
    pub fn summary_table(&self, axis: &SweepAxis) -> Table {
        let mut header = vec![axis.to_string(), "runs".to_owned()];
        let stat_cols = |header: &mut Vec<String>, names: &[&str]| {
            for n in names {
                header.extend(["mean", "min", "max"].map(|s| format!("{n}_{s}")));
            }
        };
        match self {
            SweepOutcome::Scenario(_) => {
                let names = [
                    "avg_peer_set",
                    "peak_avg_peer_set",
                    "diameter",
                    "n_partitions",
                    "bottleneck",
                    "intra_head",
                    "head_detached_share",
                ];
                stat_cols(&mut header, &names);
                header.extend(["partitioned_runs", "first_attack_split_mean", "first_churn_split_mean"].map(str::to_owned));
                let mut t = Table::new(header);
                for (value, runs) in self.scenario_groups() {
                    let mut row = vec![fmt(value), runs.len().to_string()];
                    let metrics: [&dyn Fn(&RunDigest) -> f64; 7] = [
                        &|r| r.probe.avg_peer_set,
                        &|r| r.peak_avg_peer_set(),
                        &|r| f64::from(r.probe.diameter),
                        &|r| r.probe.num_partitions() as f64,
                        &|r| r.bottleneck as f64,
                        &|r| r.intra_head as f64,
                        &|r| r.head.share(),
                    ];
                    for m in metrics {
                        row.extend(Summary::of(runs.iter().map(|r| m(r))).expect("nonempty group").cells());
                    }
                    row.push(runs.iter().filter(|r| r.probe.num_partitions() > 1).count().to_string());
                    for mode in RemovalMode::ALL {
                        let splits = runs.iter().filter_map(|r| first_split(r.removals(mode)));
                        row.push(Summary::of(splits).map(|s| fmt(s.mean)).unwrap_or_default());
                    }
                    t.push(row);
                }
                t
            }
            SweepOutcome::Exchange(_) => {
                stat_cols(&mut header, &["mean_completion_secs"]);
                header.extend(["incomplete_total".to_owned(), "improvement_pct".to_owned()]);
                let mut t = Table::new(header);
                let mut previous: Option<f64> = None;
                for (value, runs) in self.exchange_groups() {
                    let mut row = vec![fmt(value), runs.len().to_string()];
                    let s = Summary::of(runs.iter().filter_map(|p| p.outcome.mean_completion_secs()));
                    row.extend(s.map(|s| s.cells()).unwrap_or_default());
                    row.push(runs.iter().map(|p| p.outcome.incomplete()).sum::<usize>().to_string());
                    let mean = s.map(|s| s.mean);
                    row.push(match (previous, mean) {
                        (Some(a), Some(b)) => fmt(100.0 * (a - b) / a),
                        _ => String::new(),
                    });
                    previous = mean;
                    t.push(row);
                }
                t
            }
        }
    }
}
