use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use vsc_cli::commands;
use vsc_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "vsc",
    version,
    about = "Self-consistent harmonic ensembles under vibrational strong coupling: \
             simulation, spectra, polarizabilities, and oracle verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.out_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override ensemble.level from the config (sc, be, D).
    #[arg(long)]
    level: Option<String>,
}

impl CommonArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.run.seed = seed;
        }
        if let Some(level) = &self.level {
            config.ensemble.level = level.clone();
        }
        config.validate()?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&config.run.out_dir));
        Ok((config, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Autocorrelation spectrum and peak list of one observable.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        /// collective_dipole, local_dipole, bond, or photon.
        #[arg(long, default_value = "collective_dipole")]
        observable: String,
        /// Read a previously written trajectory instead of running.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Number of independent seeds averaged (end-to-end mode).
        #[arg(long, default_value_t = 4)]
        seeds: u32,
        /// Relative peak detection threshold in (0, 1).
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
    /// Closed-form polarizability table over an (N, lambda) grid.
    PolarizabilityTable {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated ensemble sizes.
        #[arg(long, value_delimiter = ',', default_value = "1,5,20,100")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 0.05)]
        lambda_max: f64,
        #[arg(long, default_value_t = 6)]
        lambda_steps: usize,
    },
    /// Analytic cavity-frequency renormalization curves over lambda.
    RedshiftScan {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 0.05)]
        lambda_max: f64,
        #[arg(long, default_value_t = 51)]
        steps: usize,
    },
    /// Run the same protocol at sc, be, and D and tabulate the photon peak.
    ApproximationCompare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 2)]
        seeds: u32,
    },
    /// Randomized analytic-versus-oracle equivalence sweep.
    OracleVerify {
        #[arg(long, default_value_t = 200)]
        draws: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn lambda_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 1 {
        bail!("need at least one lambda step");
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    Ok((0..steps)
        .map(|k| min + (max - min) * k as f64 / (steps - 1) as f64)
        .collect())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => {
            let (config, out) = common.load()?;
            let path = commands::simulate(&config, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Spectrum {
            common,
            observable,
            trajectory,
            seeds,
            threshold,
        } => {
            let (config, out) = common.load()?;
            let kind = commands::parse_observable(&observable)?;
            let result =
                commands::spectrum(&config, &out, kind, trajectory.as_deref(), seeds, threshold)?;
            println!("wrote {}", result.spectrum_path.display());
            println!("wrote {}", result.peaks_path.display());
            for peak in &result.peaks {
                println!(
                    "peak at {:.6e} hartree ({:.2} cm^-1), intensity {:.3e}",
                    peak.frequency,
                    peak.frequency * vsc_core::units::HARTREE_TO_INV_CM,
                    peak.intensity
                );
            }
        }
        Command::PolarizabilityTable {
            common,
            n_list,
            lambda_min,
            lambda_max,
            lambda_steps,
        } => {
            let (config, out) = common.load()?;
            let lambdas = lambda_grid(lambda_min, lambda_max, lambda_steps)?;
            let path = commands::polarizability_table(&config, &out, &n_list, &lambdas)?;
            println!("wrote {}", path.display());
        }
        Command::RedshiftScan {
            common,
            lambda_min,
            lambda_max,
            steps,
        } => {
            let (config, out) = common.load()?;
            let path = commands::redshift_scan(&config, &out, lambda_min, lambda_max, steps)?;
            println!("wrote {}", path.display());
        }
        Command::ApproximationCompare { common, seeds } => {
            let (config, out) = common.load()?;
            let (path, rows) = commands::approximation_compare(&config, &out, seeds)?;
            println!("wrote {}", path.display());
            for row in &rows {
                println!(
                    "{:>2}: photon peak {:.6e}, predicted {:.6e} ({}), neutral-atom residual {:.3e}",
                    row.level.label(),
                    row.photon_peak,
                    row.predicted,
                    row.status,
                    row.neutral_atom_force_residual
                );
            }
        }
        Command::OracleVerify { draws, seed } => {
            let (report, table) = commands::oracle_verify(draws, seed)?;
            print!("{table}");
            if !report.passed() {
                bail!("oracle verification failed");
            }
        }
    }
    Ok(())
}
