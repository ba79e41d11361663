use std::path::{Path, PathBuf};

use bohmflow::integrator::IntegratorConfig;
use bohmflow::nodal::TrackOptions;
use bohmflow::surfaces::{IntegralSurface, SurfaceFamily};
use bohmflow::wavefunction::WaveSpec;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::presets;

pub const DEFAULT_OMEGAS: [f64; 3] = [1.0, std::f64::consts::SQRT_2, 1.7320508075688772];
pub const DEFAULT_OUT_DIR: &str = "bohmflow-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Retrace,
    Classify,
    NodalTrack,
    Xpoint,
    Perturb,
    Project,
    Report,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Retrace => "retrace",
            Task::Classify => "classify",
            Task::NodalTrack => "nodal-track",
            Task::Xpoint => "xpoint",
            Task::Perturb => "perturb",
            Task::Project => "project",
            Task::Report => "report",
        }
    }
}

/// A complete run description, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base preset; the rest of the file overrides its keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Task a preset is meant for; the subcommand decides what actually runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub wave: WaveBlock,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceBlock>,
    #[serde(default)]
    pub nodal: NodalBlock,
    #[serde(default)]
    pub xpoint: XPointBlock,
    #[serde(default)]
    pub perturb: PerturbBlock,
    #[serde(default)]
    pub project: ProjectBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveBlock {
    /// Quantum numbers of the three terms.
    pub modes: [[u32; 3]; 3],
    #[serde(default = "default_omegas")]
    pub omegas: [f64; 3],
    /// Moduli `(a, b, c)`; mutually exclusive with `small_amplitudes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<[f64; 3]>,
    /// `(b, c)` with `a = √(1 − b² − c²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_amplitudes: Option<[f64; 2]>,
    /// Phases of the three amplitudes, radians.
    #[serde(default)]
    pub phases: [f64; 3],
}

fn default_omegas() -> [f64; 3] {
    DEFAULT_OMEGAS
}

impl WaveBlock {
    pub fn build(&self) -> Result<WaveSpec<f64>, ConfigError> {
        let moduli = match (self.amplitudes, self.small_amplitudes) {
            (Some(a), None) => a,
            (None, Some([b, c])) => {
                let a2 = 1.0 - b * b - c * c;
                if a2 < 0.0 {
                    return Err(ConfigError::invalid(
                        "wave.small_amplitudes",
                        "b² + c² exceeds 1",
                    ));
                }
                [a2.sqrt(), b, c]
            }
            (None, None) => return Err(ConfigError::Missing("wave.amplitudes".into())),
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "wave.amplitudes",
                    "give either amplitudes or small_amplitudes, not both",
                ))
            }
        };
        let amps: [Complex<f64>; 3] =
            std::array::from_fn(|i| Complex::from_polar(moduli[i], self.phases[i]));
        WaveSpec::new(amps, self.modes, self.omegas)
            .map_err(|e| ConfigError::invalid("wave", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub t0: f64,
    pub t1: f64,
    /// Cartesian initial conditions at `t0`.
    #[serde(default)]
    pub initial: Vec<[f64; 3]>,
    /// Spherical initial conditions `[r, θ, φ]` (θ from the z axis).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_spherical: Vec<[f64; 3]>,
    /// Output grid step; accepted steps are written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
}

impl Scenario {
    /// All initial conditions, Cartesian ones first.
    pub fn initial_points(&self) -> Vec<[f64; 3]> {
        let sph = self.initial_spherical.iter().map(|&[r, th, ph]| {
            [
                r * th.sin() * ph.cos(),
                r * th.sin() * ph.sin(),
                r * th.cos(),
            ]
        });
        self.initial.iter().copied().chain(sph).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sphere,
    Pear,
    Open,
}

impl From<Family> for SurfaceFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Sphere => SurfaceFamily::Sphere,
            Family::Pear => SurfaceFamily::Pear,
            Family::Open => SurfaceFamily::Open,
        }
    }
}

/// Integral surface. Without `c` or `radius` each orbit uses the surface
/// through its own initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceBlock {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Sphere only, same as `c = radius²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl SurfaceBlock {
    fn level(&self) -> Result<Option<f64>, ConfigError> {
        match (self.c, self.radius) {
            (Some(_), Some(_)) => Err(ConfigError::invalid(
                "surface.radius",
                "give either c or radius",
            )),
            (None, Some(_)) if self.family != Family::Sphere => Err(ConfigError::invalid(
                "surface.radius",
                "only spheres have a radius",
            )),
            (None, Some(r)) => Ok(Some(r * r)),
            (c, None) => Ok(c),
        }
    }

    /// The fixed surface, if the block names a level.
    pub fn fixed(&self, omega3: f64) -> Result<Option<IntegralSurface>, ConfigError> {
        self.level()?
            .map(|c| {
                IntegralSurface::new(self.family.into(), c, omega3)
                    .map_err(|e| ConfigError::invalid("surface", e.to_string()))
            })
            .transpose()
    }

    /// The fixed surface, or the one through `x`.
    pub fn for_point(&self, x: &[f64; 3], omega3: f64) -> bohmflow::Result<IntegralSurface> {
        match self.level() {
            Ok(Some(c)) => IntegralSurface::new(self.family.into(), c, omega3),
            _ => IntegralSurface::through(self.family.into(), x, omega3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodalMethod {
    ClosedForm,
    Fplane,
    SurfaceNewton,
    SurfaceOde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodalBlock {
    /// Defaults by family: closed form on spheres, surface ODE on pears,
    /// F-plane on open surfaces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<NodalMethod>,
    /// Output grid for the closed form, F-plane and Newton trackers.
    pub dt: f64,
    /// Keep only the node nearest to this point at `t0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<[f64; 3]>,
    /// Seed grid size for the surface scan.
    pub scan_grid: usize,
    /// Node distance from the origin treated as infinity.
    pub cutoff: f64,
}

impl NodalBlock {
    pub fn track_options(&self) -> TrackOptions {
        TrackOptions {
            cutoff: self.cutoff,
            ..TrackOptions::default()
        }
    }
}

impl Default for NodalBlock {
    fn default() -> Self {
        Self {
            method: None,
            dt: 0.01,
            seed: None,
            scan_grid: 12,
            cutoff: TrackOptions::default().cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XPointBlock {
    /// Times to search; empty means `t0, t0 + dt, …, t1`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    pub dt: f64,
}

impl Default for XPointBlock {
    fn default() -> Self {
        Self {
            times: Vec::new(),
            dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbBlock {
    pub order: u32,
    /// Grid for the deviation from numerics.
    pub dt: f64,
}

impl Default for PerturbBlock {
    fn default() -> Self {
        Self { order: 2, dt: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectSource {
    Orbits,
    Nodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectBlock {
    pub source: ProjectSource,
    /// `[u, φ]` bin counts.
    pub bins: [usize; 2],
}

impl Default for ProjectBlock {
    fn default() -> Self {
        Self {
            source: ProjectSource::Orbits,
            bins: [18, 36],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Where a config came from, for error messages and the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigSource {
    Preset(String),
    File(PathBuf),
}

impl std::fmt::Display for ConfigSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigSource::Preset(name) => write!(f, "preset {name}"),
            ConfigSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

impl RunConfig {
    /// Parses TOML text. A top-level `preset = "name"` key pulls in that
    /// preset first and lays the file's keys over it.
    pub fn parse(text: &str, source: &ConfigSource) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| ConfigError::parse(source, text, &e))?;
        let cfg: RunConfig = match table.get("preset") {
            // direct deserialization keeps spans for error locations
            None => toml::from_str(text).map_err(|e| ConfigError::parse(source, text, &e))?,
            Some(base) => {
                let name = base
                    .as_str()
                    .ok_or_else(|| ConfigError::invalid("preset", "must be a string"))?
                    .to_string();
                let mut merged: toml::Table = presets::text(&name)?
                    .parse()
                    .expect("presets are valid TOML");
                merged.remove("description");
                merge(&mut merged, table);
                merged
                    .try_into()
                    .map_err(|e| ConfigError::parse(source, text, &e))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, &ConfigSource::File(path.to_path_buf()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.wave.build()?;
        self.integrator
            .validate()
            .map_err(|e| ConfigError::invalid("integrator", e.to_string()))?;
        if let Some(s) = &self.scenario {
            if !(s.t0.is_finite() && s.t1.is_finite() && s.t1 > s.t0) {
                return Err(ConfigError::invalid("scenario.t1", "need finite t0 < t1"));
            }
            if let Some(dt) = s.sample_dt {
                if !(dt > 0.0) {
                    return Err(ConfigError::invalid(
                        "scenario.sample_dt",
                        "must be positive",
                    ));
                }
            }
        }
        if let Some(surface) = &self.surface {
            surface.fixed(self.wave.omegas[2])?;
        }
        if !(self.nodal.dt > 0.0) {
            return Err(ConfigError::invalid("nodal.dt", "must be positive"));
        }
        if !(self.nodal.cutoff > 1.0) {
            return Err(ConfigError::invalid("nodal.cutoff", "must exceed 1"));
        }
        if !(self.xpoint.dt > 0.0) {
            return Err(ConfigError::invalid("xpoint.dt", "must be positive"));
        }
        if !(1..=2).contains(&self.perturb.order) {
            return Err(ConfigError::invalid(
                "perturb.order",
                "series are available to order 1 or 2",
            ));
        }
        if !(self.perturb.dt > 0.0) {
            return Err(ConfigError::invalid("perturb.dt", "must be positive"));
        }
        if self.project.bins.contains(&0) {
            return Err(ConfigError::invalid(
                "project.bins",
                "need at least one bin per axis",
            ));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<WaveSpec<f64>, ConfigError> {
        self.wave.build()
    }

    pub fn scenario(&self) -> Result<&Scenario, ConfigError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("scenario".into()))
    }

    pub fn surface(&self) -> Result<&SurfaceBlock, ConfigError> {
        self.surface
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("surface".into()))
    }

    /// Initial conditions, required to be non-empty.
    pub fn initial_points(&self) -> Result<Vec<[f64; 3]>, ConfigError> {
        let points = self.scenario()?.initial_points();
        if points.is_empty() {
            return Err(ConfigError::Missing("scenario.initial".into()));
        }
        Ok(points)
    }
}

/// Recursive table merge; `over` wins.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
