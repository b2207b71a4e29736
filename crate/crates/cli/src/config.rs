//! Run configuration: SI units on the outside, natural units (c = 1, lengths in metres)
//! handed to the simulation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stfit::material::Method;
use stfit::resonator::{omega_from_rim_speed, Excitation, ExperimentConfig, ResonatorError};
use stfit::solver::Scheme;

use crate::error::CliError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const CONFIG_VERSION: u32 = 1;

/// Seconds to natural time (metres of light travel).
pub fn seconds_to_natural(t: f64) -> f64 {
    SPEED_OF_LIGHT * t
}

/// Natural angular frequency (1/m) to rad/s.
pub fn natural_to_rad_per_s(omega: f64) -> f64 {
    SPEED_OF_LIGHT * omega
}

pub fn rad_per_s_to_natural(omega: f64) -> f64 {
    omega / SPEED_OF_LIGHT
}

/// Annulus dimensions in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub a: f64,
    pub b: f64,
    pub h: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { a: 5e-3, b: 10e-3, h: 2e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { n_r: 4, n_theta: 32, n_z: 2 }
    }
}

/// Rotation given either as rim speed (fraction of c) or as Ω in rad/s; exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rim_speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl Default for Rotation {
    fn default() -> Self {
        Self { rim_speed: Some(0.0314), omega: None }
    }
}

impl Rotation {
    pub fn rim_speed(v: f64) -> Self {
        Self { rim_speed: Some(v), omega: None }
    }

    pub fn omega(rad_per_s: f64) -> Self {
        Self { rim_speed: None, omega: Some(rad_per_s) }
    }

    /// Ω in natural units for an annulus of outer radius `b` metres.
    pub fn natural(&self, b: f64) -> Result<f64, CliError> {
        match (self.rim_speed, self.omega) {
            (Some(v), None) if (0.0..1.0).contains(&v) => Ok(omega_from_rim_speed(v, b)),
            (Some(v), None) => Err(CliError::Config(format!("rim speed must lie in [0, 1), got {v}"))),
            (None, Some(w)) if w.is_finite() => Ok(rad_per_s_to_natural(w)),
            (None, Some(w)) => Err(CliError::Config(format!("Ω must be finite, got {w}"))),
            _ => Err(CliError::Config("rotation needs exactly one of rim_speed and omega".into())),
        }
    }
}

/// Time-marching scheme as written in configs and on the command line: `implicit`,
/// `leapfrog` or `extrapolated:K` with K in 0..=2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchemeName(pub Scheme);

impl Default for SchemeName {
    fn default() -> Self {
        Self(Scheme::Implicit)
    }
}

impl FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(Self(Scheme::Implicit)),
            "leapfrog" => Ok(Self(Scheme::Leapfrog)),
            _ => {
                let order =
                    s.strip_prefix("extrapolated:").and_then(|k| k.parse::<u8>().ok()).filter(|&k| k <= 2).ok_or_else(
                        || format!("unknown scheme {s:?}; use implicit, leapfrog or extrapolated:K (K ≤ 2)"),
                    )?;
                Ok(Self(Scheme::Extrapolated(order)))
            }
        }
    }
}

impl TryFrom<String> for SchemeName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Scheme::Implicit => f.write_str("implicit"),
            Scheme::Leapfrog => f.write_str("leapfrog"),
            Scheme::Extrapolated(k) => write!(f, "extrapolated:{k}"),
        }
    }
}

impl From<SchemeName> for String {
    fn from(s: SchemeName) -> Self {
        s.to_string()
    }
}

/// Sweep for the `table` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub modes: Vec<u32>,
    pub rim_speeds: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { modes: vec![1, 2, 3], rim_speeds: vec![0.0031, 0.0314], methods: vec![Method::Fit, Method::Fem] }
    }
}

/// Complete run description. Missing fields take the desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub geometry: Geometry,
    pub resolution: Resolution,
    /// Time step in seconds; `None` picks half the Courant limit.
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub rotation: Rotation,
    pub method: Method,
    pub scheme: SchemeName,
    pub mode: u32,
    pub excitation: Excitation,
    /// Probe (r [m], θ [rad], z [m]) in reference coordinates.
    pub probe: Option<[f64; 3]>,
    pub output: PathBuf,
    pub refine: bool,
    pub growth_limit: f64,
    /// Leave wall-clock timestamps and phase timings out of reports so reruns are
    /// byte-identical.
    pub deterministic: bool,
    pub table: Sweep,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            geometry: Geometry::default(),
            resolution: Resolution::default(),
            dt: None,
            n_steps: None,
            rotation: Rotation::default(),
            method: Method::Fit,
            scheme: SchemeName::default(),
            mode: 1,
            excitation: Excitation::Stationary,
            probe: None,
            output: PathBuf::from("stfit-out"),
            refine: true,
            growth_limit: 10.0,
            deterministic: true,
            table: Sweep::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config file. The `version` key is mandatory.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(CONFIG_VERSION) => {}
            Some(v) => {
                return Err(CliError::Config(format!("unsupported config version {v}, expected {CONFIG_VERSION}")))
            }
            None => return Err(CliError::Config("config must set \"version\": 1".into())),
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn omega_natural(&self) -> Result<f64, CliError> {
        self.rotation.natural(self.geometry.b)
    }

    /// Natural-unit experiment settings, validated.
    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let Geometry { a, b, h } = self.geometry;
        if !(a > 0.0 && b > a && h > 0.0 && b.is_finite() && h.is_finite()) {
            return Err(CliError::Config(format!("need 0 < a < b and h > 0, got a = {a}, b = {b}, h = {h}")));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(CliError::Config(format!("dt must be positive, got {dt} s")));
            }
        }
        if let Some([r, _, z]) = self.probe {
            if !(a..=b).contains(&r) || !(0.0..=h).contains(&z) {
                return Err(CliError::Config(format!("probe (r = {r}, z = {z}) lies outside the annulus")));
            }
        }
        let config = ExperimentConfig {
            a,
            b,
            h,
            n_r: self.resolution.n_r,
            n_theta: self.resolution.n_theta,
            n_z: self.resolution.n_z,
            dt: self.dt.map(seconds_to_natural),
            n_steps: self.n_steps,
            omega: self.omega_natural()?,
            method: self.method,
            scheme: self.scheme.0,
            m: self.mode,
            excitation: self.excitation,
            probe: self.probe,
            growth_limit: self.growth_limit,
        };
        config.validate().map_err(|e| match e {
            ResonatorError::Config(msg) => CliError::Config(msg),
            other => CliError::Config(other.to_string()),
        })?;
        Ok(config)
    }
}
