use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use siqrb_cli::commands::{self, Control, SimulateOptions, DEFAULT_UMAX_LIST};
use siqrb_cli::output::{sink, to_json};
use siqrb_cli::{parse_override, CliError, ConfigSource};
use siqrb_core::integrate::RegionVerdict;
use siqrb_core::optctl::SweepOptions;

/// SIQRB cholera model: simulation, equilibria, optimal control and
/// calibration.
#[derive(Parser)]
#[command(name = "siqrb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario JSON file; the bundled Yemen scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a numeric config field, e.g. `--set beta=0.002`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, f64)>,
}

impl ConfigArgs {
    fn source(&self) -> ConfigSource {
        ConfigSource {
            path: self.config.clone(),
            overrides: self.overrides.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model and write t,S,I,Q,R,B,uptake as CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Final time in days (default: horizon_days of the config).
        #[arg(long)]
        horizon: Option<f64>,
        /// Constant control value.
        #[arg(long, conflicts_with = "schedule")]
        control: Option<f64>,
        /// File with one control value per grid node.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Write every n-th node (the last node is always written).
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Output CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report R0, equilibria, their stability and the bifurcation at R0 = 1.
    Equilibria {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Solve the optimal control problem; prints a JSON summary.
    Control {
        #[command(flatten)]
        config: ConfigArgs,
        /// Control bound (default: u_max of the config).
        #[arg(long)]
        umax: Option<f64>,
        /// Horizon in days (default: reference horizon for the bound, else
        /// horizon_days).
        #[arg(long)]
        horizon: Option<f64>,
        /// CSV with t,u,phi,S..B,l1..l5.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the summary JSON here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Iteration cap of the forward-backward sweep.
        #[arg(long, default_value_t = SweepOptions::default().max_iterations)]
        max_iterations: usize,
    },
    /// Solve for several control bounds and write u_max,T,t_s,I_peak,J.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_UMAX_LIST)]
        umax_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit beta to weekly case counts.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Case series CSV (default: bundled Yemen series).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Search range `lo,hi`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        range: Option<Vec<f64>>,
        #[arg(long)]
        n_grid: Option<usize>,
    },
}

fn write_text(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    let mut out = sink(path)?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            horizon,
            control,
            schedule,
            stride,
            out,
        } => {
            let cfg = config.source().load()?;
            let control = match (control, schedule) {
                (_, Some(path)) => Control::Schedule(commands::load_schedule(&path)?),
                (u, None) => Control::Constant(u.unwrap_or(0.0)),
            };
            let sim = commands::simulate(
                &cfg,
                &SimulateOptions {
                    horizon,
                    control,
                    stride,
                },
            )?;
            commands::write_simulation(&sim, sink(out.as_deref())?)?;
            match sim.verdict {
                RegionVerdict::Inside => eprintln!("invariant region: inside"),
                RegionVerdict::Outside {
                    time, violation, ..
                } => {
                    eprintln!("invariant region: left at t = {time}: {violation:?}")
                }
            }
            info!("peak I = {} at t = {}", sim.peak.1, sim.peak.0);
        }
        Command::Equilibria { config, json } => {
            let report = commands::equilibria(&config.source().load()?)?;
            let text = if json {
                to_json(&report)
            } else {
                commands::equilibria_text(&report)
            };
            write_text(None, text.trim_end())?;
        }
        Command::Control {
            config,
            umax,
            horizon,
            out,
            summary,
            stride,
            max_iterations,
        } => {
            let cfg = config.source().load()?;
            let opts = SweepOptions {
                max_iterations,
                ..SweepOptions::default()
            };
            let run = commands::control(&cfg, umax, horizon, &opts)?;
            if let Some(path) = &out {
                commands::write_control(&run.solution, stride, sink(Some(path))?)?;
            }
            write_text(summary.as_deref(), &to_json(&run.summary))?;
            if !run.summary.converged {
                return Err(CliError::NotConverged(format!(
                    "sweep did not converge in {} iterations; best iterate written",
                    run.summary.iterations
                )));
            }
        }
        Command::Sweep {
            config,
            umax_list,
            out,
        } => {
            let rows = commands::sweep(&config.source().load()?, &umax_list)?;
            commands::write_sweep(&rows, sink(out.as_deref())?)?;
            let failed: Vec<String> = rows
                .iter()
                .filter(|r| !r.converged)
                .map(|r| r.u_max.to_string())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::NotConverged(format!(
                    "no convergence for u_max = {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Fit {
            config,
            data,
            range,
            n_grid,
        } => {
            let cfg = config.source().load()?;
            let range = range.map(|r| (r[0], r[1]));
            let report = commands::fit(&cfg, data.as_deref(), range, n_grid)?;
            write_text(None, &to_json(&report))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
