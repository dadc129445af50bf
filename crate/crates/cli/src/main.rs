use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvzf::inversion::PeakCount;
use nvzf::io::RunConfig;
use nvzf_cli::{cmd_batch, cmd_fit, cmd_rabi, cmd_simulate, cmd_strengths, cmd_sweep, load_config, ScanAxis};

/// Zero-field ODMR of NV centers: simulate spectra, fit them and extract
/// the intrinsic effective field.
#[derive(Debug, Parser)]
#[command(name = "nvzf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a spectrum plus a JSON list of the six transitions
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed in the config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit Gaussian dips to a spectrum CSV and invert the centers
    Fit {
        spectrum: PathBuf,
        /// NV parameters and inversion options; defaults when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "auto")]
        n_peaks: PeakCount,
    },
    /// Branch frequencies over an axial-field grid
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Normalized strengths over a φ_mw or ε_mw grid
    Strengths {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Defaults to whichever angle grid the config provides
        #[arg(long, value_enum)]
        scan: Option<ScanAxis>,
    },
    /// Resonant Rabi trace of one transition
    Rabi {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// 1..4 (outer low, inner low, inner high, outer high) or a label like `-,+1`
        #[arg(long)]
        transition: String,
    },
    /// Fit every CSV in a directory and summarize the extracted fields
    Batch {
        dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value = "auto")]
        n_peaks: PeakCount,
    },
}

fn optional_config(path: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::from_json("{}")?),
    }
}

fn run(cli: Cli) -> anyhow::Result<nvzf_cli::Outcome> {
    match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&load_config(&config)?, seed, &out),
        Command::Fit { spectrum, config, out, n_peaks } => {
            cmd_fit(&spectrum, n_peaks, &optional_config(config.as_ref())?, &out)
        }
        Command::Sweep { config, out } => cmd_sweep(&load_config(&config)?, &out),
        Command::Strengths { config, out, scan } => cmd_strengths(&load_config(&config)?, scan, &out),
        Command::Rabi { config, out, transition } => cmd_rabi(&load_config(&config)?, &transition, &out),
        Command::Batch { dir, config, out, n_peaks } => {
            cmd_batch(&dir, n_peaks, &optional_config(config.as_ref())?, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NVZF_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
