use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drexhage_cli::commands::{self, GlobalOpts};

/// Dipole emission near an adjustable planar mirror: enhancement maps,
/// angular patterns, decay-rate sweeps, and measured-spectra analysis.
#[derive(Parser)]
#[command(name = "drexhage", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "drexhage.toml")]
    config: PathBuf,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Override the configured worker count (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Also render PNG images next to the CSV outputs.
    #[arg(long, global = true)]
    images: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the mirror-distance versus wavelength enhancement map.
    Map,
    /// Far-field angular pattern at one mirror distance and wavelength.
    Pattern {
        /// Mirror distance (air gap), nm.
        #[arg(long)]
        d: f64,
        /// Emission wavelength, nm.
        #[arg(long)]
        lambda: f64,
    },
    /// Decay-rate budget versus d (fixed lambda) or versus lambda (fixed d).
    Purcell {
        /// Fix the wavelength and sweep the distance grid.
        #[arg(long)]
        lambda: Option<f64>,
        /// Fix the distance and sweep the wavelength grid.
        #[arg(long)]
        d: Option<f64>,
    },
    /// Enhancement map from a measured distance scan and a reference spectrum.
    Enhance {
        /// Scan CSV: `# lambda_nm:` header then `d,counts...` rows.
        #[arg(long)]
        scan: PathBuf,
        /// Reference spectrum CSV (single-row scan format).
        #[arg(long)]
        reference: PathBuf,
    },
    /// Estimate the smallest mirror distance from a measured map.
    #[command(name = "fit-d0")]
    FitD0 {
        /// Measured enhancement map CSV.
        #[arg(long)]
        measured: PathBuf,
        /// Wavelength column to align, nm.
        #[arg(long)]
        lambda: f64,
    },
    /// Print resolved refractive indices at the requested wavelengths.
    Materials {
        /// Wavelengths, nm (repeatable).
        #[arg(long = "lambda", required = true)]
        lambdas: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        config: cli.config,
        out_dir: cli.out_dir,
        workers: cli.workers,
        images: cli.images,
    };
    let result = match &cli.command {
        Command::Map => commands::cmd_map(&opts),
        Command::Pattern { d, lambda } => commands::cmd_pattern(&opts, *d, *lambda),
        Command::Purcell { lambda, d } => commands::cmd_purcell(&opts, *lambda, *d),
        Command::Enhance { scan, reference } => commands::cmd_enhance(&opts, scan, reference),
        Command::FitD0 { measured, lambda } => commands::cmd_fit_d0(&opts, measured, *lambda),
        Command::Materials { lambdas } => commands::cmd_materials(&opts, lambdas),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
