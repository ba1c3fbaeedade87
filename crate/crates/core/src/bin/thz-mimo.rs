use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use thz_mimo::channel::{facing_arrays, total_channel};
use thz_mimo::cli::{
    emit_csv, emit_csv_file, list_presets, load_mixture_spectrum, parse_config, resolve_scenario,
    run_scenario, spectra_dir, RunError, RunOptions, SPECTRA_DIR_ENV,
};

/// Multi-antenna capacity simulator for molecular-absorbing THz links.
#[derive(Debug, Parser)]
#[command(name = "thz-mimo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a sweep from a config file and/or a named preset.
    Run {
        /// Scenario config file; its values override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named figure preset (see `list-presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Antennas per array; must be a perfect square.
        #[arg(long)]
        antennas: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Small arrays, few trials and a thinned frequency grid.
        #[arg(long, conflicts_with = "full")]
        smoke: bool,
        /// Keep full-scale antennas and trials (225 elements, 1000 trials).
        #[arg(long)]
        full: bool,
        #[arg(long, env = SPECTRA_DIR_ENV)]
        spectra_dir: Option<PathBuf>,
    },
    /// Print the available presets.
    ListPresets,
    /// Mix species spectra into one absorption spectrum CSV.
    Mix {
        /// Mixture file (`name=` line plus `SPECIES=percent` lines).
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long, env = SPECTRA_DIR_ENV)]
        spectra_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one total channel realization as CSV.
    DumpMatrix {
        #[arg(long, default_value_t = 16)]
        antennas: usize,
        #[arg(long)]
        frequency: f64,
        #[arg(long)]
        distance: f64,
        /// Absorption coefficient, 1/m.
        #[arg(long, default_value_t = 0.0)]
        k: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_text(out: Option<&PathBuf>, text: &str) -> Result<(), RunError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run {
            config,
            preset,
            out,
            seed,
            antennas,
            trials,
            smoke,
            full,
            spectra_dir: dir,
        } => {
            let config = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    Some(parse_config(&text)?)
                }
                None => None,
            };
            let scenario = resolve_scenario(&RunOptions {
                preset,
                config,
                seed,
                antennas,
                trials,
                full_scale: full,
                smoke,
            })?;
            let rows = run_scenario(&scenario, &spectra_dir(dir.as_deref()))?;
            match &out {
                Some(path) => {
                    emit_csv_file(&rows, path)?;
                    info!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => {
                    emit_csv(&rows, std::io::stdout().lock()).map_err(|source| RunError::Io {
                        path: "<stdout>".into(),
                        source,
                    })?
                }
            }
            Ok(())
        }
        Command::ListPresets => {
            for name in list_presets() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Mix {
            mixture,
            spectra_dir: dir,
            out,
        } => {
            let spectrum = load_mixture_spectrum(&mixture, &spectra_dir(dir.as_deref()))?;
            write_text(out.as_ref(), &spectrum.to_csv())
        }
        Command::DumpMatrix {
            antennas,
            frequency,
            distance,
            k,
            seed,
            out,
        } => {
            let (tx, rx) = facing_arrays(antennas, frequency, distance)?;
            let h = total_channel(&tx, &rx, frequency, k, seed)?;
            write_text(out.as_ref(), &h.to_csv(k, distance))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
