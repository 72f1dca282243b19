use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feshrf_cli::{commands, AppError};

/// Radio-frequency association spectra, fits and self-validation for
/// trapped heteronuclear Feshbach molecules.
///
/// Config files are JSON in laboratory units; the FESHRF_CONFIG
/// environment variable supplies the path when the positional argument is
/// omitted. Exit codes: 0 success, 1 input error, 2 fit or check failure,
/// 3 numerical failure.
#[derive(Parser)]
#[command(name = "feshrf", version, about)]
struct Cli {
    /// Worker threads for grids and sampling (default: all cores).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the model spectrum over an RF grid, written as CSV
    Spectrum {
        /// Config path (falls back to $FESHRF_CONFIG)
        config: Option<PathBuf>,
        /// RF grid in Hz as start:stop:step
        #[arg(long)]
        grid: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit binding energy and scale factor to a measured spectrum CSV
    FitSpectrum {
        /// Config path (falls back to $FESHRF_CONFIG)
        config: Option<PathBuf>,
        /// Input CSV: rf_frequency_hz,molecule_count[,count_uncertainty]
        #[arg(long)]
        data: PathBuf,
        /// Output report path (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit resonance position and width to binding-energy-vs-field points
    FitResonance {
        /// Config path (falls back to $FESHRF_CONFIG)
        config: Option<PathBuf>,
        /// Input CSV: b_field_gauss,binding_energy_khz,sigma_khz
        #[arg(long)]
        points: PathBuf,
        /// Output report path (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Monte Carlo and quadrature self-validation checks
    Oracle {
        /// Config path (falls back to $FESHRF_CONFIG)
        config: Option<PathBuf>,
        /// Number of sampled atom pairs
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// RNG seed (default: the config's seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Test hook: scale the temperature of the expected density
        #[arg(long, hide = true)]
        corrupt_expected_t: Option<f64>,
        /// Output report path (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate binding energy and channel admixture versus field
    BindingCurve {
        /// Config path (falls back to $FESHRF_CONFIG)
        config: Option<PathBuf>,
        /// Field range in gauss as start:stop:step
        #[arg(long)]
        field_range: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Spectrum { config, grid, out } => commands::cmd_spectrum(config, &grid, &out),
        Command::FitSpectrum { config, data, out } => {
            commands::cmd_fit_spectrum(config, &data, &out)
        }
        Command::FitResonance {
            config,
            points,
            out,
        } => commands::cmd_fit_resonance(config, &points, &out),
        Command::Oracle {
            config,
            samples,
            seed,
            corrupt_expected_t,
            out,
        } => commands::cmd_oracle(config, samples, seed, corrupt_expected_t, &out),
        Command::BindingCurve {
            config,
            field_range,
            out,
        } => commands::cmd_binding_curve(config, &field_range, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        // ignore the error when a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
