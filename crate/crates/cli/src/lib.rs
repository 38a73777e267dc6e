//! Command-line front end for the trapped-ion teleportation simulator.

pub mod commands;
pub mod config;
pub mod output;
pub mod script;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::CommonArgs;

#[derive(Debug, Parser)]
#[command(name = "ionsim", version, about = "Trapped-ion teleportation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective Rabi frequency of every Fock sector on a grid
    RabiSurface(CommonArgs),
    /// Bell-channel fidelity for a list of occupations
    ChannelFidelity(CommonArgs),
    /// One full teleportation run with per-outcome detail
    Teleport {
        #[command(flatten)]
        common: CommonArgs,
        /// Draw this many readout outcomes (requires --seed)
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Teleportation fidelity over an (nbar, eta) grid
    FidelitySurface(CommonArgs),
    /// Entanglement swapping with heralded Bell labels
    Swap(CommonArgs),
    /// Execute a pulse script
    RunScript {
        /// Script file
        script: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Runs a parsed command line and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let (text, settings) = match &cli.command {
        Command::RabiSurface(a) => commands::rabi_surface(a)?,
        Command::ChannelFidelity(a) => commands::channel_fidelity(a)?,
        Command::Teleport { common, sample } => commands::teleport(common, *sample)?,
        Command::FidelitySurface(a) => commands::fidelity_surface(a)?,
        Command::Swap(a) => commands::swap(a)?,
        Command::RunScript { script, common } => commands::run_script(script, common)?,
    };
    output::emit(&text, config::output_path(&settings).as_deref())
}
