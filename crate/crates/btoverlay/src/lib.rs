//! Experiment harness for the `btoverlay-core` simulator: TOML experiment
//! files, multi-seed runs in parallel, parameter sweeps, removal
//! experiments and CSV export. The `btoverlay` binary is a thin front end
//! over this library.

pub mod error;
pub mod experiment;
pub mod figures;
pub mod presets;
pub mod runs;
pub mod seeds;
pub mod sweep;
pub mod table;

pub use btoverlay_core as core;
pub use error::{Error, Result};
pub use experiment::{Experiment, Overrides};
pub use figures::{export_figure_data, Batch, Figure};
pub use presets::{run_preset, Manifest, Preset, PresetOptions};
pub use runs::{run_seeds, Probe, RemovalMode, RunDigest};
pub use sweep::{SweepAxis, SweepOutcome, SweepSpec};
pub use table::{Summary, Table};
