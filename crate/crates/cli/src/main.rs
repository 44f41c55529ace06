//! `pipescope`: impulse-response synthesis and cross-sectional area
//! reconstruction for tree pipe networks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 reconstruction point beyond the waves' reach.

mod commands;
mod error;
mod plot;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pipescope_core::irm::DEFAULT_PRUNE_EPS;

use crate::commands::{read_manifest, Run};
use crate::error::CliError;
use crate::settings::{
    absolute, network_source, Defaults, FileConfig, NetworkSource, OracleRun, PlotRun, Preset, ReconstructRun,
    Shift, SimulateRun,
};

#[derive(Debug, Parser)]
#[command(name = "pipescope", version, about)]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, env = "PIPESCOPE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every computing subcommand.
#[derive(Debug, Args)]
struct Common {
    /// Reference experiment whose network and constants are the defaults.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// TOML file with settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network description (JSON).
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact impulse response of a piecewise-uniform network, sampled.
    OracleIrm {
        #[command(flatten)]
        common: Common,
        /// Time span of the kernels, s.
        #[arg(long)]
        horizon: Option<f64>,
        /// Sample step, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Relative amplitude below which wavefronts are dropped.
        #[arg(long)]
        prune_eps: Option<f64>,
        /// Output IRM file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Impulse response measured from simulated unit-step experiments.
    SimulateIrm {
        #[command(flatten)]
        common: Common,
        /// Cell length, m.
        #[arg(long)]
        dx: Option<f64>,
        /// Courant number, at most 1.
        #[arg(long)]
        courant: Option<f64>,
        /// Simulated time span, s.
        #[arg(long)]
        duration: Option<f64>,
        /// Output sample step, s.
        #[arg(long, conflicts_with = "no_resample")]
        resample_dt: Option<f64>,
        /// Keep the simulation time grid.
        #[arg(long)]
        no_resample: bool,
        /// Median-filter window, s.
        #[arg(long)]
        smooth_window: Option<f64>,
        /// Output IRM file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Volume and area profiles along pipes from an impulse response.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// IRM file from `oracle-irm` or `simulate-irm`.
        #[arg(long)]
        irm: Option<PathBuf>,
        /// Control time, s.
        #[arg(long)]
        tau: Option<f64>,
        /// Spacing of reconstruction points, m.
        #[arg(long)]
        dx: Option<f64>,
        /// Regularisation weight: one value, or one per pipe in network order.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Pipes to reconstruct (default: all).
        #[arg(long, value_delimiter = ',')]
        pipes: Option<Vec<String>>,
        /// Distance from each pipe's far end to reconstruct up to, m
        /// (default: as far as the waves reach).
        #[arg(long, value_delimiter = ',')]
        extent: Option<Vec<f64>>,
        /// Sample shift of the reflected-time kernel argument.
        #[arg(long, value_enum)]
        shift: Option<Shift>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG figure of area or volume profiles.
    Plot {
        /// Profile CSV files.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Network whose true profile is drawn for comparison.
        #[arg(long, conflicts_with = "preset")]
        truth: Option<PathBuf>,
        /// Draw the true profile of a reference network.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Output SVG file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeats a run from its manifest.
    Replay {
        manifest: PathBuf,
        /// Write the outputs here instead (a directory for `reconstruct`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Resolved {
    run: Run,
    jobs: Option<usize>,
}

fn resolve(command: Command) -> Result<Resolved, CliError> {
    let load = |c: &Common| -> Result<(FileConfig, Option<Preset>), CliError> {
        let file = FileConfig::load(c.config.as_deref())?;
        let preset = c.preset.or(file.preset);
        Ok((file, preset))
    };
    Ok(match command {
        Command::OracleIrm {
            common,
            horizon,
            dt,
            prune_eps,
            out,
        } => {
            let (file, preset) = load(&common)?;
            let d = Defaults::for_preset(preset);
            let s = &file.oracle_irm;
            Resolved {
                jobs: file.jobs,
                run: Run::OracleIrm(OracleRun {
                    network: network_source(common.network, &file, preset)?,
                    horizon: horizon.or(s.horizon).unwrap_or(d.horizon),
                    dt: dt.or(s.dt).unwrap_or(d.dt),
                    prune_eps: prune_eps.or(s.prune_eps).unwrap_or(DEFAULT_PRUNE_EPS),
                    out: absolute(&out),
                }),
            }
        }
        Command::SimulateIrm {
            common,
            dx,
            courant,
            duration,
            resample_dt,
            no_resample,
            smooth_window,
            out,
        } => {
            let (file, preset) = load(&common)?;
            let d = Defaults::for_preset(preset);
            let s = &file.simulate_irm;
            Resolved {
                jobs: file.jobs,
                run: Run::SimulateIrm(SimulateRun {
                    network: network_source(common.network, &file, preset)?,
                    dx: dx.or(s.dx).unwrap_or(d.sim_dx),
                    courant: courant.or(s.courant).unwrap_or(d.courant),
                    duration: duration.or(s.duration).unwrap_or(d.duration),
                    resample_dt: if no_resample {
                        None
                    } else {
                        resample_dt.or(s.resample_dt).or(d.resample_dt)
                    },
                    smooth_window: smooth_window.or(s.smooth_window).unwrap_or(d.smooth_window),
                    out: absolute(&out),
                }),
            }
        }
        Command::Reconstruct {
            common,
            irm,
            tau,
            dx,
            lambda,
            pipes,
            extent,
            shift,
            out,
        } => {
            let (file, preset) = load(&common)?;
            let d = Defaults::for_preset(preset);
            let s = &file.reconstruct;
            let irm = irm
                .or(s.irm.clone())
                .ok_or_else(|| CliError::Config("no impulse response: pass --irm".into()))?;
            Resolved {
                jobs: file.jobs,
                run: Run::Reconstruct(ReconstructRun {
                    network: network_source(common.network, &file, preset)?,
                    irm: absolute(&irm),
                    tau: tau.or(s.tau).unwrap_or(d.tau),
                    dx: dx.or(s.dx).unwrap_or(d.recon_dx),
                    lambda: lambda.or(s.lambda.clone()).unwrap_or(d.lambda),
                    pipes: pipes.or(s.pipes.clone()).unwrap_or_default(),
                    extent: extent.or(s.extent.clone()),
                    shift: shift.or(s.shift).unwrap_or(Shift::OneSample),
                    out: absolute(&out),
                }),
            }
        }
        Command::Plot {
            inputs,
            truth,
            preset,
            out,
        } => Resolved {
            jobs: None,
            run: Run::Plot(PlotRun {
                inputs: inputs.iter().map(|p| absolute(p)).collect(),
                truth: truth
                    .map(|p| NetworkSource::File(absolute(&p)))
                    .or(preset.map(NetworkSource::Preset)),
                out: absolute(&out),
            }),
        },
        Command::Replay { manifest, out } => {
            let m = read_manifest(&manifest)?;
            let run = Run::from_manifest(&m)?;
            Resolved {
                jobs: None,
                run: match out {
                    Some(out) => run.with_out(absolute(&out)),
                    None => run,
                },
            }
        }
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let resolved = resolve(cli.command)?;
    if let Some(jobs) = cli.jobs.or(resolved.jobs) {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let manifest = resolved.run.run_and_record()?;
    eprintln!("{}: wrote {}", resolved.run.name(), manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pipescope: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
