use std::path::PathBuf;

use btoverlay_core::analysis::AnalysisError;
use btoverlay_core::exchange::ExchangeError;
use btoverlay_core::sim::SnapshotError;
use btoverlay_core::ConfigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ConfigError),
    #[error("invalid exchange setup: {0}")]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot render config: {0}")]
    Render(#[from] toml::ser::Error),
    #[error("seed range {0:?}: expected N, N..M or N..=M with N <= M")]
    SeedRange(String),
    #[error("seed list is empty")]
    NoSeeds,
    #[error("unknown preset {name:?}; available: {}", known.join(", "))]
    UnknownPreset { name: String, known: Vec<&'static str> },
    #[error("unknown figure {name:?}; available: {}", known.join(", "))]
    UnknownFigure { name: String, known: Vec<&'static str> },
    #[error("unknown sweep axis {0:?}")]
    UnknownAxis(String),
    #[error("sweep axis {axis}: {reason}")]
    AxisValue { axis: String, reason: String },
    #[error("sweep has no values")]
    EmptySweep,
    #[error("removal fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
