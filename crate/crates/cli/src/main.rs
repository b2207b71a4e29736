//! `stfit`: rotating ring-resonator simulations on a space-time mesh.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stfit::material::Method;
use stfit::resonator::Excitation;

use crate::commands::SimulateOptions;
use crate::config::{Rotation, RunConfig, SchemeName};
use crate::error::{CliError, Failure, InPhase, Phase, EXIT_CODE_HELP};

#[derive(Debug, Parser)]
#[command(name = "stfit", version, about = "Simulate a rotating ring resonator and measure its frequency splitting")]
#[command(after_help = EXIT_CODE_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and check the space-time mesh, then write it as JSON and VTK.
    #[command(after_help = EXIT_CODE_HELP)]
    Mesh(RunArgs),
    /// Run one resonator simulation and estimate the frequency shift.
    #[command(after_help = EXIT_CODE_HELP)]
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also export the material blocks in Matrix Market format.
        #[arg(long)]
        matrix_market: bool,
        /// Steps of the implicit-vs-leapfrog comparison made for non-rotating runs.
        #[arg(long, default_value_t = 100)]
        equivalence_steps: usize,
    },
    /// Estimate the frequency shift from a recorded signal CSV.
    #[command(after_help = EXIT_CODE_HELP)]
    Analyze {
        /// CSV with columns t,E_z[,...] in natural time units.
        signal: PathBuf,
        /// Carrier frequency in natural units (1/m); defaults to the configured mode.
        #[arg(long)]
        carrier: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sweep modes and rim speeds and tabulate relative errors per method.
    #[command(after_help = EXIT_CODE_HELP)]
    Table {
        #[command(flatten)]
        run: RunArgs,
        /// Azimuthal mode numbers (comma separated).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<u32>>,
        /// Rim speeds as fractions of c (comma separated).
        #[arg(long, value_delimiter = ',')]
        rim_speeds: Option<Vec<f64>>,
        /// Methods to tabulate: fit, fem (comma separated).
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
}

/// Config file plus per-field overrides. Lengths in metres, times in seconds.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration ("version": 1 required).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Inner radius [m].
    #[arg(long)]
    a: Option<f64>,
    /// Outer radius [m].
    #[arg(long)]
    b: Option<f64>,
    /// Height [m].
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_z: Option<usize>,
    /// Time step [s]; default is half the Courant limit.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of steps; default covers the first beat null.
    #[arg(long)]
    steps: Option<usize>,
    /// Rim speed as a fraction of c.
    #[arg(long, conflicts_with = "omega")]
    rim_speed: Option<f64>,
    /// Rotation rate [rad/s].
    #[arg(long)]
    omega: Option<f64>,
    /// fit or fem.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// implicit, leapfrog or extrapolated:K (K ≤ 2).
    #[arg(long)]
    scheme: Option<SchemeName>,
    /// Azimuthal mode number.
    #[arg(long)]
    mode: Option<u32>,
    /// stationary or rotating.
    #[arg(long, value_parser = parse_excitation)]
    excitation: Option<Excitation>,
    /// Probe position r,θ,z [m, rad, m].
    #[arg(long, value_parser = parse_probe)]
    probe: Option<[f64; 3]>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Skip the least-squares refinement of the shift estimate.
    #[arg(long)]
    no_refine: bool,
    /// Energy growth factor treated as divergence.
    #[arg(long)]
    growth_limit: Option<f64>,
    /// Put a timestamp and phase timings in reports (breaks byte-identical reruns).
    #[arg(long)]
    record_timings: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "fit" => Ok(Method::Fit),
        "fem" => Ok(Method::Fem),
        _ => Err(format!("unknown method {s:?}; use fit or fem")),
    }
}

fn parse_probe(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    parts.try_into().map_err(|_| format!("probe needs three values r,θ,z, got {s:?}"))
}

fn parse_excitation(s: &str) -> Result<Excitation, String> {
    match s {
        "stationary" => Ok(Excitation::Stationary),
        "rotating" => Ok(Excitation::Rotating),
        _ => Err(format!("unknown excitation {s:?}; use stationary or rotating")),
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let geometry = &mut c.geometry;
        let resolution = &mut c.resolution;
        set(&mut geometry.a, self.a);
        set(&mut geometry.b, self.b);
        set(&mut geometry.h, self.h);
        set(&mut resolution.n_r, self.n_r);
        set(&mut resolution.n_theta, self.n_theta);
        set(&mut resolution.n_z, self.n_z);
        c.dt = self.dt.or(c.dt);
        c.n_steps = self.steps.or(c.n_steps);
        if let Some(v) = self.rim_speed {
            c.rotation = Rotation::rim_speed(v);
        }
        if let Some(w) = self.omega {
            c.rotation = Rotation::omega(w);
        }
        set(&mut c.method, self.method);
        set(&mut c.scheme, self.scheme);
        set(&mut c.mode, self.mode);
        set(&mut c.excitation, self.excitation);
        c.probe = self.probe.or(c.probe);
        set(&mut c.output, self.output.clone());
        set(&mut c.growth_limit, self.growth_limit);
        c.refine &= !self.no_refine;
        c.deterministic &= !self.record_timings;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mesh(run) => commands::mesh(&run.resolve().in_phase(Phase::Config)?),
        Command::Simulate { run, matrix_market, equivalence_steps } => {
            let config = run.resolve().in_phase(Phase::Config)?;
            commands::simulate(&config, &SimulateOptions { matrix_market, equivalence_steps })
        }
        Command::Analyze { signal, carrier, run } => {
            commands::analyze(&run.resolve().in_phase(Phase::Config)?, &signal, carrier)
        }
        Command::Table { run, modes, rim_speeds, methods } => {
            let mut config = run.resolve().in_phase(Phase::Config)?;
            set(&mut config.table.modes, modes);
            set(&mut config.table.rim_speeds, rim_speeds);
            set(&mut config.table.methods, methods);
            commands::table(&config)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.error.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "stfit",
            "simulate",
            "--n-theta",
            "12",
            "--omega",
            "1e6",
            "--scheme",
            "extrapolated:0",
            "--method",
            "fem",
            "--probe",
            "0.006,0.5,0.001",
            "--no-refine",
        ])
        .unwrap();
        let Command::Simulate { run, .. } = cli.command else { panic!("wrong subcommand") };
        let config = run.resolve().unwrap();
        assert_eq!(config.resolution.n_theta, 12);
        assert_eq!(config.rotation, Rotation::omega(1e6));
        assert_eq!(config.scheme.to_string(), "extrapolated:0");
        assert_eq!(config.method, Method::Fem);
        assert_eq!(config.probe, Some([0.006, 0.5, 0.001]));
        assert!(!config.refine);
        assert!(config.deterministic);
    }

    #[test]
    fn rim_speed_and_omega_flags_conflict() {
        assert!(Cli::try_parse_from(["stfit", "mesh", "--rim-speed", "0.1", "--omega", "3"]).is_err());
        assert!(Cli::try_parse_from(["stfit", "mesh", "--scheme", "rk4"]).is_err());
    }
}
