use std::fmt;
use std::path::PathBuf;

use stfit::material::MaterialError;
use stfit::mesh::MeshError;
use stfit::resonator::ResonatorError;
use stfit::solver::SolverError;
use stfit::sparse::SparseError;
use stfit::sta::StaError;
use stfit::whitney::WhitneyError;
use thiserror::Error;

/// Exit codes, one per error source. Kept in sync with [`EXIT_CODE_HELP`].
pub mod code {
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const STA: i32 = 10;
    pub const MESH: i32 = 11;
    pub const WHITNEY: i32 = 12;
    pub const MATERIAL: i32 = 13;
    pub const SOLVER: i32 = 14;
    pub const SPARSE: i32 = 15;
    pub const RESONATOR: i32 = 16;
    pub const SELF_CHECK: i32 = 17;
}

pub const EXIT_CODE_HELP: &str = "\
Exit codes:
   0  success
   2  command-line usage error
   3  invalid configuration (parse or validation)
   4  file input/output failure
  10  space-time algebra error
  11  mesh error (dimensions, time step, causal class of facets)
  12  Whitney form error (degenerate cell)
  13  material assembly error
  14  time-stepping error
  15  sparse factorization error
  16  resonator error (mode root, signal analysis)
  17  built-in self-check failed";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("write failed: {0}")]
    Write(std::io::Error),
    #[error(transparent)]
    Sta(#[from] StaError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Whitney(#[from] WhitneyError),
    #[error(transparent)]
    Material(MaterialError),
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Resonator(ResonatorError),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => code::CONFIG,
            Self::Io { .. } | Self::Write(_) => code::IO,
            Self::Sta(_) => code::STA,
            Self::Mesh(_) => code::MESH,
            Self::Whitney(_) => code::WHITNEY,
            Self::Material(_) => code::MATERIAL,
            Self::Solver(_) => code::SOLVER,
            Self::Sparse(_) => code::SPARSE,
            Self::Resonator(_) => code::RESONATOR,
            Self::SelfCheck(_) => code::SELF_CHECK,
        }
    }
}

// Wrapped errors are unwrapped to the module that raised them so the exit code names the
// actual source.
impl From<MaterialError> for CliError {
    fn from(e: MaterialError) -> Self {
        match e {
            MaterialError::RestFrame(e) => Self::Sta(e),
            MaterialError::Whitney(e) => Self::Whitney(e),
            MaterialError::Mesh(e) => Self::Mesh(e),
            MaterialError::Io(e) => Self::Write(e),
            other => Self::Material(other),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Sparse(e) => Self::Sparse(e),
            SolverError::Io(e) => Self::Write(e),
            other => Self::Solver(other),
        }
    }
}

impl From<ResonatorError> for CliError {
    fn from(e: ResonatorError) -> Self {
        match e {
            ResonatorError::Mesh(e) => Self::Mesh(e),
            ResonatorError::Material(e) => e.into(),
            ResonatorError::Solver(e) => e.into(),
            ResonatorError::Whitney(e) => Self::Whitney(e),
            ResonatorError::Sta(e) => Self::Sta(e),
            other => Self::Resonator(other),
        }
    }
}

/// Pipeline stage reported with an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Config,
    Mesh,
    Assembly,
    Mode,
    Projection,
    Stepping,
    SelfCheck,
    Analysis,
    Output,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Config => "config",
            Self::Mesh => "mesh",
            Self::Assembly => "assembly",
            Self::Mode => "mode",
            Self::Projection => "projection",
            Self::Stepping => "stepping",
            Self::SelfCheck => "self-check",
            Self::Analysis => "analysis",
            Self::Output => "output",
        };
        f.write_str(name)
    }
}

/// An error tagged with the phase it came from.
#[derive(Debug, Error)]
#[error("{phase} phase: {error}")]
pub struct Failure {
    pub phase: Phase,
    #[source]
    pub error: CliError,
}

/// Attaches a phase to any error convertible into [`CliError`].
pub trait InPhase<T> {
    fn in_phase(self, phase: Phase) -> Result<T, Failure>;
}

impl<T, E: Into<CliError>> InPhase<T> for Result<T, E> {
    fn in_phase(self, phase: Phase) -> Result<T, Failure> {
        self.map_err(|e| Failure { phase, error: e.into() })
    }
}
