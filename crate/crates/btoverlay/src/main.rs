use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use btoverlay::experiment::SweepSection;
use btoverlay::presets::run_experiment;
use btoverlay::runs::removal_grid;
use btoverlay::seeds::SeedRange;
use btoverlay::{
    export_figure_data, run_preset, Batch, Experiment, Figure, Manifest, Overrides, Preset, PresetOptions, Probe,
    RemovalMode,
};
use clap::{Args, Parser, Subcommand};

/// Simulate BitTorrent overlay construction and export measurements as CSV.
#[derive(Parser)]
#[command(name = "btoverlay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, or the scenario (or sweep) of a config file.
    Run(Common),
    /// Sweep one parameter over several values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: a scenario field, `exchange.<field>`,
        /// `max_peer_set_tied`, `max_outgoing_tied` or `arrival_amplitude`.
        #[arg(long, requires = "values")]
        axis: Option<String>,
        /// Comma-separated values of the axis.
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Vec<f64>,
    },
    /// Remove peers from the probe snapshot and count partitions.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// `attack`, `churn` or `both`.
        #[arg(long, default_value = "both")]
        mode: String,
        /// Comma-separated removal fractions (default 0, 0.05, ..., 0.95).
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
    },
    /// Write the data of one figure.
    Export {
        #[command(flatten)]
        common: Common,
        /// Figure id; `btoverlay list` shows them all.
        #[arg(long)]
        figure: String,
    },
    /// List presets and figure ids.
    List,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range, e.g. `1..10`.
    #[arg(long)]
    seeds: Option<SeedRange>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Named experiment; `btoverlay list` shows them all.
    #[arg(long)]
    preset: Option<String>,
    /// Seconds between metric samples.
    #[arg(long = "snapshot-interval")]
    snapshot_interval: Option<f64>,
    /// Instant of the single-snapshot measurements, in seconds.
    #[arg(long, default_value_t = btoverlay::runs::PROBE_SECS)]
    at: f64,
}

impl Common {
    fn preset(&self) -> anyhow::Result<Option<Preset>> {
        Ok(self.preset.as_deref().map(Preset::parse).transpose()?)
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            seeds: self.seed.map(|s| vec![s]).or_else(|| self.seeds.as_ref().map(SeedRange::seeds)),
            snapshot_interval_secs: self.snapshot_interval,
        }
    }

    /// The config file (or the preset's base scenario) with flags applied.
    fn experiment(&self) -> anyhow::Result<Experiment> {
        let base = self.preset()?.map(Preset::base).unwrap_or_default();
        let mut exp = Experiment::load_or(self.config.as_ref(), base)?;
        exp.apply(&self.overrides());
        exp.validate()?;
        Ok(exp)
    }

    fn probe(&self) -> Probe {
        Probe {
            at_secs: self.at,
            ..Probe::default()
        }
    }
}

fn report(m: &Manifest) {
    println!("wrote {} files to {}", m.files.len() + 1, m.dir.display());
}

fn run_preset_with(preset: Preset, common: &Common) -> anyhow::Result<Manifest> {
    let exp = common.experiment()?;
    let opts = PresetOptions {
        seeds: exp.seed_list()?,
        scenario: common.config.is_some().then(|| exp.scenario.clone()),
        exchange: exp.exchange.clone(),
        snapshot_interval_secs: common.snapshot_interval,
        probe: common.probe(),
    };
    Ok(run_preset(preset, &common.out, &opts)?)
}

fn stem(path: Option<&PathBuf>, fallback: &str) -> String {
    path.and_then(|p| Path::new(p).file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_owned())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::List => {
            println!("presets:");
            for p in Preset::ALL {
                println!("  {}", p.name());
            }
            println!("figures:");
            for f in Figure::ALL {
                println!("  {:<22} {}", f.id(), f.describe());
            }
        }
        Command::Run(common) => {
            let m = match common.preset()? {
                Some(p) => run_preset_with(p, &common)?,
                None => {
                    let exp = common.experiment()?;
                    run_experiment(&exp, &stem(common.config.as_ref(), "scenario"), &common.out, &common.probe())?
                }
            };
            report(&m);
        }
        Command::Sweep { common, axis, values } => {
            let m = match (common.preset()?, axis) {
                (Some(p), None) => {
                    if p.sweep().is_none() {
                        bail!("preset {} is not a sweep", p.name());
                    }
                    run_preset_with(p, &common)?
                }
                (Some(_), Some(_)) => bail!("give either --preset or --axis, not both"),
                (None, axis) => {
                    let mut exp = common.experiment()?;
                    if let Some(axis) = axis {
                        exp.sweep = Some(SweepSection { axis, values });
                    }
                    if exp.sweep.is_none() {
                        bail!("nothing to sweep: give --axis and --values, a sweeping --preset, or a config with a [sweep] section");
                    }
                    run_experiment(&exp, &stem(common.config.as_ref(), "sweep"), &common.out, &common.probe())?
                }
            };
            report(&m);
        }
        Command::Robustness { common, mode, fractions } => {
            let modes = match mode.as_str() {
                "both" => RemovalMode::ALL.to_vec(),
                m => vec![RemovalMode::parse(m).with_context(|| format!("unknown mode {m:?}: use attack, churn or both"))?],
            };
            let exp = common.experiment()?;
            let seeds = exp.seed_list()?;
            let probe = Probe {
                fractions: if fractions.is_empty() { removal_grid() } else { fractions },
                ..common.probe()
            };
            if let Some(f) = probe.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
                bail!("removal fraction {f} outside [0, 1]");
            }
            let batch = Batch::run(exp.scenario, &seeds, probe)?;
            std::fs::create_dir_all(&common.out).with_context(|| common.out.display().to_string())?;
            let mut figures: Vec<Figure> = modes.into_iter().map(Figure::RobustnessSummary).collect();
            figures.push(Figure::Robustness);
            for f in figures {
                let path = common.out.join(format!("{}.csv", f.id()));
                export_figure_data(&batch, f)?.write_file(&path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Export { common, figure } => {
            let figure = Figure::parse(&figure)?;
            let exp = common.experiment()?;
            let seeds = exp.seed_list()?;
            let batch = Batch::run(exp.scenario, &seeds, common.probe())?;
            std::fs::create_dir_all(&common.out).with_context(|| common.out.display().to_string())?;
            let path = common.out.join(format!("{}.csv", figure.id()));
            export_figure_data(&batch, figure)?.write_file(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
