//! Command-line front end for `attrep-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod input;
pub mod pgm;

use clap::{Parser, Subcommand};

pub use config::{Flags, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "attrep", version, about = "Attraction-repulsion energies, particle approximations and 1D flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy of --mu against the datum --omega.
    Energy(Flags),
    /// Minimize the particle energy, or the grid problem with --grid.
    Minimize(Flags),
    /// Integrate the 1D gradient flow from --mu towards --omega.
    Flow(Flags),
    /// Total variation of the particles in --mu.
    Tv(Flags),
    /// Wasserstein distance between --mu and --omega.
    Wasserstein(Flags),
    /// Equal-mass tiling with --n tiles.
    Tile(Flags),
}

impl Command {
    fn flags(&self) -> &Flags {
        match self {
            Self::Energy(f) | Self::Minimize(f) | Self::Flow(f) | Self::Tv(f) | Self::Wasserstein(f) | Self::Tile(f) => f,
        }
    }
}

/// Resolves the configuration, runs the command and returns the result document.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = cli.command.flags().resolve()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    match &cli.command {
        Command::Energy(_) => commands::energy(&cfg),
        Command::Minimize(_) => commands::minimize(&cfg),
        Command::Flow(_) => commands::flow(&cfg),
        Command::Tv(_) => commands::tv(&cfg),
        Command::Wasserstein(_) => commands::wasserstein(&cfg),
        Command::Tile(_) => commands::tile(&cfg),
    }
}
