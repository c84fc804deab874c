//! Command-line front end: config resolution, subcommand dispatch, and
//! data-file emission.
//!
//! Every subcommand resolves one [`Config`] from defaults, an optional
//! `--config` file, and `--set key=value` overrides, in that order, then
//! writes its artifacts into the output directory. The directory is chosen
//! by precedence: `--out`, then `output.directory` from the config, then
//! the `CAVSIM_OUT_DIR` environment variable, then the working directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::circuit::{run_circuit, JointDistribution};
use crate::config::Config;
use crate::engine::{analyze, build_timeline, run_batch};
use crate::error::{Error, Result};
use crate::model::PulseSpec;
use crate::output::{
    analysis_to_json, circuit_to_json, read_records_csv, write_fringe_csv, write_json,
    write_records_csv, write_spectrum_csv,
};
use crate::spectrum::{frequency_grid, probe_spectrum, transmission_spectrum};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CAVSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "cavsim",
    version,
    about = "Cavity-QED Ramsey interferometer: spectra, fringe laws, and seeded delayed-choice runs"
)]
struct Cli {
    /// Config file of `key = value` lines (defaults apply to missing keys).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set physical.g_khz=120. Repeatable;
    /// applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory; beats output.directory and CAVSIM_OUT_DIR.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coupled-cavity transmission spectrum and probe spectral profile.
    Spectrum,
    /// Ideal probe-off fringe law per phase, from the gate model.
    Fringes {
        /// Number of phase points across the sweep range.
        #[arg(long, value_name = "N")]
        points: Option<usize>,
    },
    /// Joint outcome law at one phase, probe off and probe on.
    Circuit {
        /// Ramsey phase in radians.
        #[arg(long, default_value_t = 0.0, value_name = "RAD")]
        theta: f64,
    },
    /// Simulate a seeded batch of delayed-choice trials.
    Run {
        /// Trials per phase point; overrides batch.trials_per_point.
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
        /// Phase points; overrides sweep.points.
        #[arg(long, value_name = "N")]
        points: Option<usize>,
        /// Master seed; overrides batch.master_seed.
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
    },
    /// Fit fringe visibilities from a record CSV produced by `run`.
    Analyze {
        /// Record file; defaults to records.csv in the output directory.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
}

/// Parse arguments, dispatch, and return the process exit code: 0 on
/// success, 1 on an execution error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let file_text = match &cli.config {
        None => None,
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?,
        ),
    };
    let mut overrides = Vec::new();
    for entry in &cli.set {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {entry:?}: expected key=value")))?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    // subcommand flags beat --set, which beats the file
    if let Command::Run {
        trials,
        points,
        seed,
    } = &cli.command
    {
        if let Some(t) = trials {
            overrides.push(("batch.trials_per_point".into(), t.to_string()));
        }
        if let Some(p) = points {
            overrides.push(("sweep.points".into(), p.to_string()));
        }
        if let Some(s) = seed {
            overrides.push(("batch.master_seed".into(), s.to_string()));
        }
    }
    Config::from_sources(file_text.as_deref(), &overrides)
}

fn resolve_out_dir(cli: &Cli, cfg: &Config) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(".")
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if !cfg.params.strong_coupling() {
        eprintln!(
            "warning: outside the strong-coupling regime; \
             g = {:.3e} rad/s does not exceed both kappa and gamma",
            cfg.params.g
        );
    }
    let dir = resolve_out_dir(&cli, &cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    match &cli.command {
        Command::Spectrum => {
            let grid = frequency_grid(cfg.grid_span_g * cfg.params.g, cfg.grid_points)?;
            let coupled = transmission_spectrum(&cfg.params, &grid, true)?;
            let pulse = PulseSpec::new(
                cfg.pulse_shape,
                cfg.probe_width,
                0.0,
                1.0,
                cfg.params.probe_detuning,
            )?;
            let probe = probe_spectrum(&pulse, &grid)?;
            let path = dir.join("transmission.csv");
            write_spectrum_csv(&path, &coupled)?;
            announce(&path);
            let path = dir.join("probe.csv");
            write_spectrum_csv(&path, &probe)?;
            announce(&path);
        }
        Command::Fringes { points } => {
            let points = points.unwrap_or(cfg.sweep_points);
            if points == 0 {
                return Err(Error::Config("fringes --points: 0; must be ≥ 1".into()));
            }
            let rows: Vec<(f64, JointDistribution)> = cfg
                .theta_grid_with(points)
                .into_iter()
                .map(|theta| (theta, run_circuit(theta, false)))
                .collect();
            let path = dir.join("fringes.csv");
            write_fringe_csv(&path, &rows)?;
            announce(&path);
        }
        Command::Circuit { theta } => {
            if !theta.is_finite() {
                return Err(Error::Config(format!("--theta {theta}: must be finite")));
            }
            let off = run_circuit(*theta, false);
            let on = run_circuit(*theta, true);
            let path = dir.join("circuit.json");
            write_json(&path, &circuit_to_json(*theta, &off, &on))?;
            announce(&path);
        }
        Command::Run { .. } => {
            let timeline = build_timeline(&cfg.params, &cfg.timeline_spec()?)?;
            let records = run_batch(
                &cfg.params,
                &timeline,
                &cfg.theta_grid(),
                cfg.trials_per_point,
                cfg.master_seed,
            )?;
            let path = dir.join("records.csv");
            write_records_csv(&path, &records)?;
            announce(&path);
        }
        Command::Analyze { input } => {
            let input = input.clone().unwrap_or_else(|| dir.join("records.csv"));
            let records = read_records_csv(&input)?;
            let summary = analyze(&records)?;
            let path = dir.join("analysis.json");
            write_json(&path, &analysis_to_json(&summary))?;
            announce(&path);
        }
    }
    Ok(())
}
