use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ofdma_cic::channels::{self, ChannelMode, Seed};
use ofdma_cic::harness::{self, ExperimentKind, ExperimentSpec};
use ofdma_cic::{Error, Result};

/// Two-cell OFDMA spectrum sharing simulator.
#[derive(Parser)]
#[command(name = "ofdma-cic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the built-in setups (fig3, fig6, fig8).
    Preset {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write one channel realization as `link,sc,user,gain` rows.
    DumpChannels {
        /// Built-in setup to draw from, applied before --config.
        #[arg(long)]
        preset: Option<String>,
        /// Trial index to draw.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Position on the sweep axis.
        #[arg(long, default_value_t = 0)]
        axis_index: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated scheme list.
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long, value_parser = ["taps", "iid"])]
    channel_mode: Option<String>,
}

impl Common {
    fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            spec.apply_config(&text)?;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(list) = &self.schemes {
            spec.schemes = harness::parse_schemes(list)?;
        }
        if let Some(mode) = &self.channel_mode {
            spec.channel.mode = mode.parse::<ChannelMode>()?;
        }
        if let Some(out) = &self.out {
            spec.output = Some(out.clone());
        }
        Ok(())
    }
}

fn experiment(spec: &ExperimentSpec) -> Result<()> {
    let result = harness::run_experiment(spec)?;
    match &spec.output {
        Some(path) => {
            harness::write_outputs(spec, &result, path)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
        }
        None => {
            let stdout = io::stdout();
            harness::write_rows(spec, &result, stdout.lock())?;
        }
    }
    Ok(())
}

fn dump(spec: &ExperimentSpec, trial: u64, axis_index: usize) -> Result<()> {
    spec.validate()?;
    let axis_value = match spec.kind {
        ExperimentKind::GSweep | ExperimentKind::Femto => Some(*spec.axis.get(axis_index).ok_or_else(|| {
            Error::config("axis_index", format!("{axis_index} out of range for {} axis values", spec.axis.len()))
        })?),
        _ => None,
    };
    let (cfg, params) = spec.system_at(axis_value)?;
    let chan = channels::generate::<f64>(&params, &cfg, Seed(spec.seed), trial)?;
    match &spec.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            channels::dump_csv(&chan, io::BufWriter::new(file))
        }
        None => {
            let mut out = io::stdout().lock();
            channels::dump_csv(&chan, &mut out)?;
            out.flush().map_err(|e| Error::io("stdout", e))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common } => {
            if common.config.is_none() {
                return Err(Error::Usage("`run` needs --config PATH".into()));
            }
            let mut spec = ExperimentSpec::default();
            common.apply(&mut spec)?;
            experiment(&spec)
        }
        Command::Preset { name, common } => {
            let mut spec = harness::preset(&name)?;
            common.apply(&mut spec)?;
            experiment(&spec)
        }
        Command::DumpChannels { preset, trial, axis_index, common } => {
            let mut spec = match preset {
                Some(name) => harness::preset(&name)?,
                None => ExperimentSpec::default(),
            };
            common.apply(&mut spec)?;
            dump(&spec, trial, axis_index)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
