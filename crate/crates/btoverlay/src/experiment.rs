//! Experiment files: a scenario, an exchange setup, an optional sweep and
//! the seeds to run, all in one TOML document.
//!
//! ```toml
//! seeds = [1, 2, 3]
//!
//! [scenario]
//! max_peer_set = 80
//! nat_fraction = 0.3
//!
//! [scenario.arrival_law]
//! kind = "exponential_slots"
//! amplitude = 1000.0
//! rate = 0.7
//! slot_minutes = 10.0
//! num_slots = 4
//!
//! [exchange]
//! target_peer_set = 100
//!
//! [sweep]
//! axis = "max_outgoing"
//! values = [10, 20, 40]
//! ```
//!
//! Every field is optional and falls back to its default.

use std::path::{Path, PathBuf};

use btoverlay_core::exchange::ExchangeConfig;
use btoverlay_core::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::default_seeds;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// Explicit seeds; when absent, `1..=scenario.runs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub scenario: ScenarioConfig,
    pub exchange: ExchangeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub snapshot_interval_secs: Option<f64>,
}

impl Experiment {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_owned(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Loads `path` if given, otherwise starts from `base`.
    pub fn load_or(path: Option<&PathBuf>, base: ScenarioConfig) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self {
                scenario: base,
                ..Self::default()
            }),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seeds) = &o.seeds {
            self.seeds = Some(seeds.clone());
        }
        if let Some(dt) = o.snapshot_interval_secs {
            self.scenario.snapshot_interval_secs = dt;
        }
    }

    pub fn seed_list(&self) -> Result<Vec<u64>> {
        let seeds = self
            .seeds
            .clone()
            .unwrap_or_else(|| default_seeds(self.scenario.runs));
        if seeds.is_empty() {
            return Err(Error::NoSeeds);
        }
        Ok(seeds)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.exchange.validate()?;
        self.seed_list()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
