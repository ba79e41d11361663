use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bohmflow::diagnostics::{
    analyze_orbit, azimuth_mass_near, sphere_special_azimuths, surface_drift, Binner, Chart,
    LabelThresholds, OrbitReport, DEFAULT_CHART_TOLERANCE,
};
use bohmflow::integrator::{integrate, retrace_error, Trajectory};
use bohmflow::nodal::{
    closed_form_track, default_node_ode_config, nodal_closed_form_sphere_branch, nodal_find,
    scan_surface_nodes, track_fplane_with, track_surface_newton_with, track_surface_ode,
    track_surface_ode_with, write_xpoints_csv, xpoint_find, Branch, NodalPoint, NodalTrack,
};
use bohmflow::perturbation::{deviation, formal_integral_surface, iterate_order, IntegralRelation};
use bohmflow::surfaces::{classify_integrability, IntegralSurface, SurfaceFamily};
use bohmflow::wavefunction::WaveSpec;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigSource, NodalMethod, ProjectSource, RunConfig, Task, DEFAULT_OUT_DIR};
use crate::error::{CliError, ConfigError};

/// Command-line overrides, already merged with the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub threads: Option<usize>,
}

impl RunOptions {
    /// Fills unset fields from `BOHMFLOW_OUT` and `BOHMFLOW_THREADS`.
    pub fn with_env(mut self) -> Result<Self, ConfigError> {
        if self.out.is_none() {
            self.out = std::env::var_os("BOHMFLOW_OUT")
                .filter(|v| !v.is_empty())
                .map(PathBuf::from);
        }
        if self.threads.is_none() {
            if let Ok(v) = std::env::var("BOHMFLOW_THREADS") {
                let n = v.trim().parse().map_err(|_| {
                    ConfigError::invalid("BOHMFLOW_THREADS", format!("not a thread count: {v:?}"))
                })?;
                self.threads = Some(n);
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    /// Written files relative to `out_dir`, manifest last.
    pub files: Vec<String>,
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    task: Task,
    source: &'a ConfigSource,
    inputs_sha256: String,
    config: &'a RunConfig,
    threads: usize,
    started_unix_s: u64,
    timings: Timings,
    artifacts: Vec<ArtifactEntry>,
}

#[derive(Serialize)]
struct Timings {
    task_s: f64,
    total_s: f64,
}

#[derive(Serialize)]
struct ArtifactEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

/// In-memory outputs of a task, written once the task succeeded.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(
        &mut self,
        name: impl Into<String>,
        write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) {
        let mut buf = Vec::new();
        write(&mut buf).expect("writing to memory");
        self.files.push((name.into(), buf));
    }

    fn json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        self.add(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        });
    }
}

trait Context<T> {
    fn ctx(self, task: Task, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for bohmflow::Result<T> {
    fn ctx(self, task: Task, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Task {
            task,
            context: what(),
            source,
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolves the output directory: flag or environment, then the config,
/// then `bohmflow-out`.
pub fn output_dir(cfg: &RunConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare_dir(dir: &Path) -> Result<(), ConfigError> {
    let err = |source| ConfigError::OutputDir {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".bohmflow-write-test");
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)
}

/// Runs `task` and writes its artifacts plus `manifest.json`.
pub fn run(
    task: Task,
    config: &RunConfig,
    source: &ConfigSource,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut cfg = config.clone();
    if let Some(dt) = opts.dt {
        if !(dt > 0.0) {
            return Err(ConfigError::invalid("--dt", "must be positive").into());
        }
        if let Some(s) = cfg.scenario.as_mut() {
            s.sample_dt = Some(dt);
        }
        cfg.nodal.dt = dt;
    }
    cfg.validate()?;
    let out_dir = output_dir(&cfg, opts);
    prepare_dir(&out_dir)?;
    let inputs_sha256 = sha256_hex(
        serde_json::to_string(&cfg)
            .expect("config serializes")
            .as_bytes(),
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| ConfigError::invalid("--threads", e.to_string()))?;
    let threads = pool.current_num_threads();
    let task_start = Instant::now();
    let (artifacts, summary) = pool.install(|| execute(task, &cfg))?;
    let task_s = task_start.elapsed().as_secs_f64();

    let mut entries = Vec::new();
    let mut files = Vec::new();
    for (name, bytes) in &artifacts.files {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        entries.push(ArtifactEntry {
            path: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        files.push(name.clone());
    }
    let manifest = Manifest {
        tool: "bohmflow",
        version: env!("CARGO_PKG_VERSION"),
        core_version: bohmflow::VERSION,
        task,
        source,
        inputs_sha256,
        config: &cfg,
        threads,
        started_unix_s,
        timings: Timings {
            task_s,
            total_s: started.elapsed().as_secs_f64(),
        },
        artifacts: entries,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
    files.push("manifest.json".into());
    Ok(Outcome {
        out_dir,
        files,
        summary,
    })
}

fn execute(task: Task, cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    match task {
        Task::Simulate => simulate(cfg),
        Task::Retrace => retrace(cfg),
        Task::Classify => classify(cfg),
        Task::NodalTrack => nodal_track(cfg),
        Task::Xpoint => xpoints(cfg),
        Task::Perturb => perturb(cfg),
        Task::Project => project(cfg),
        Task::Report => report(cfg),
    }
}

fn write_trajectory(
    artifacts: &mut Artifacts,
    name: String,
    traj: &Trajectory<f64>,
    sample_dt: Option<f64>,
) {
    artifacts.add(name, |w| traj.write_csv(w, sample_dt));
}

#[derive(Serialize)]
struct SurfaceInfo {
    family: SurfaceFamily,
    c: f64,
}

impl From<&IntegralSurface> for SurfaceInfo {
    fn from(s: &IntegralSurface) -> Self {
        Self {
            family: s.family,
            c: s.c_value,
        }
    }
}

#[derive(Serialize)]
struct SimulatedOrbit {
    index: usize,
    x0: [f64; 3],
    t_start: f64,
    t_end: f64,
    end_point: [f64; 3],
    steps_accepted: u64,
    steps_rejected: u64,
    min_reduced_density: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    surface: Option<SurfaceInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    surface_drift_max: Option<f64>,
}

fn simulate(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Simulate;
    let spec = cfg.spec()?;
    let sc = cfg.scenario()?;
    let points = cfg.initial_points()?;
    let runs: Vec<(Trajectory<f64>, SimulatedOrbit)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let what = || format!("orbit {i} from {x0:?}");
            let traj = integrate(&spec, *x0, sc.t0, sc.t1, &cfg.integrator).ctx(task, what)?;
            let (surface, drift) = match &cfg.surface {
                Some(block) => {
                    let s = block.for_point(x0, spec.omegas[2]).ctx(task, what)?;
                    let d = surface_drift(&traj, &s).ctx(task, what)?;
                    (
                        Some(SurfaceInfo::from(&s)),
                        Some(d.into_iter().fold(0.0, f64::max)),
                    )
                }
                None => (None, None),
            };
            let orbit = SimulatedOrbit {
                index: i,
                x0: *x0,
                t_start: traj.t_start,
                t_end: traj.t_end,
                end_point: traj.end_point(),
                steps_accepted: traj.steps_accepted,
                steps_rejected: traj.steps_rejected,
                min_reduced_density: traj.min_g_seen,
                surface,
                surface_drift_max: drift,
            };
            Ok((traj, orbit))
        })
        .collect::<Result<_, CliError>>()?;
    let mut artifacts = Artifacts::default();
    let mut orbits = Vec::new();
    for (i, (traj, orbit)) in runs.into_iter().enumerate() {
        write_trajectory(
            &mut artifacts,
            format!("trajectory_{i}.csv"),
            &traj,
            sc.sample_dt,
        );
        orbits.push(orbit);
    }
    let worst = orbits
        .iter()
        .filter_map(|o| o.surface_drift_max)
        .fold(None, |a: Option<f64>, d| Some(a.map_or(d, |a| a.max(d))));
    artifacts.json(
        "report.json",
        &serde_json::json!({ "task": task, "orbits": orbits }),
    );
    let mut summary = format!(
        "{} orbit(s) integrated over [{}, {}]",
        orbits.len(),
        sc.t0,
        sc.t1
    );
    if let Some(d) = worst {
        summary += &format!(", max surface drift {d:.3e}");
    }
    Ok((artifacts, summary))
}

fn retrace(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Retrace;
    let spec = cfg.spec()?;
    let sc = cfg.scenario()?;
    let points = cfg.initial_points()?;
    let errors: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            retrace_error(&spec, *x0, sc.t0, sc.t1, &cfg.integrator)
                .ctx(task, || format!("orbit {i} from {x0:?}"))
        })
        .collect::<Result<_, _>>()?;
    let orbits: Vec<_> = points
        .iter()
        .zip(&errors)
        .enumerate()
        .map(|(i, (x0, e))| serde_json::json!({ "index": i, "x0": x0, "t0": sc.t0, "t1": sc.t1, "retrace_error": e }))
        .collect();
    let mut artifacts = Artifacts::default();
    artifacts.json(
        "retrace.json",
        &serde_json::json!({ "task": task, "orbits": orbits }),
    );
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Ok((
        artifacts,
        format!("{} orbit(s), worst retrace error {worst:.3e}", errors.len()),
    ))
}

fn classify(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let spec = cfg.spec()?;
    let class = classify_integrability(&spec);
    let mut artifacts = Artifacts::default();
    artifacts.json(
        "classify.json",
        &serde_json::json!({
            "modes": spec.quantum_numbers(),
            "kind": class.kind,
            "matched_cases": class.matched_cases,
        }),
    );
    let kind = serde_json::to_value(class.kind).expect("kind serializes");
    let summary = format!(
        "{} (matched cases {:?})",
        kind.as_str().unwrap_or("?"),
        class.matched_cases
    );
    Ok((artifacts, summary))
}

/// The configured surface, or the one through the first initial condition.
fn scenario_surface(cfg: &RunConfig, omega3: f64) -> Result<IntegralSurface, CliError> {
    let block = cfg.surface()?;
    if let Some(s) = block.fixed(omega3)? {
        return Ok(s);
    }
    let x0 = cfg
        .scenario()?
        .initial_points()
        .first()
        .copied()
        .ok_or_else(|| ConfigError::Missing("surface.c".into()))?;
    Ok(block
        .for_point(&x0, omega3)
        .map_err(|e| ConfigError::invalid("surface", e.to_string()))?)
}

fn default_method(family: SurfaceFamily) -> NodalMethod {
    match family {
        SurfaceFamily::Sphere => NodalMethod::ClosedForm,
        SurfaceFamily::Pear => NodalMethod::SurfaceOde,
        _ => NodalMethod::Fplane,
    }
}

/// Seeds on `surface` at `t`, optionally only the one nearest `near`.
fn surface_seeds(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    t: f64,
    grid: usize,
    near: Option<[f64; 3]>,
) -> bohmflow::Result<Vec<NodalPoint>> {
    let mut seeds = scan_surface_nodes(spec, surface, t, grid)?;
    if let Some(p) = near {
        let d = |n: &NodalPoint| bohmflow::linalg::dist(&n.x, &p);
        seeds.sort_by(|a, b| d(a).total_cmp(&d(b)));
        seeds.truncate(1);
    }
    if seeds.is_empty() {
        return Err(bohmflow::Error::NotFound(format!(
            "no node on the surface at t={t}"
        )));
    }
    Ok(seeds)
}

/// Node tracks over the scenario span, per the `[nodal]` block.
fn node_tracks(cfg: &RunConfig, task: Task) -> Result<(NodalMethod, Vec<NodalTrack>), CliError> {
    let spec = cfg.spec()?;
    let sc = cfg.scenario()?;
    let nodal = &cfg.nodal;
    let surface = match (&cfg.surface, nodal.method) {
        (None, Some(NodalMethod::Fplane)) => None,
        _ => Some(scenario_surface(cfg, spec.omegas[2])?),
    };
    let method = nodal.method.unwrap_or_else(|| {
        default_method(surface.as_ref().map_or(SurfaceFamily::Open, |s| s.family))
    });
    let what = || format!("{method:?} tracking over [{}, {}]", sc.t0, sc.t1);
    let opts = nodal.track_options();
    let tracks = match (method, &surface) {
        (NodalMethod::ClosedForm, Some(s)) if s.family == SurfaceFamily::Sphere => {
            let r = s.c_value.sqrt();
            [Branch::Plus, Branch::Minus]
                .into_par_iter()
                .map(|b| closed_form_track(&spec, r, sc.t0, sc.t1, nodal.dt, b))
                .collect::<bohmflow::Result<Vec<_>>>()
                .ctx(task, what)?
        }
        (NodalMethod::ClosedForm, _) => {
            return Err(ConfigError::invalid(
                "nodal.method",
                "the closed form exists for spheres only",
            )
            .into())
        }
        (NodalMethod::Fplane, None) => {
            let guess = nodal
                .seed
                .ok_or_else(|| ConfigError::Missing("nodal.seed".into()))?;
            let seed = nodal_find(&spec, sc.t0, &guess).ctx(task, what)?;
            vec![track_fplane_with(&spec, &seed, sc.t1, nodal.dt, &opts).ctx(task, what)?]
        }
        (method, Some(s)) => {
            let seeds =
                surface_seeds(&spec, s, sc.t0, nodal.scan_grid, nodal.seed).ctx(task, what)?;
            seeds
                .par_iter()
                .map(|seed| match method {
                    NodalMethod::Fplane => track_fplane_with(&spec, seed, sc.t1, nodal.dt, &opts),
                    NodalMethod::SurfaceNewton => {
                        track_surface_newton_with(&spec, s, seed, sc.t1, nodal.dt, &opts)
                    }
                    _ => track_surface_ode_with(
                        &spec,
                        s,
                        seed,
                        sc.t1,
                        &default_node_ode_config(),
                        &opts,
                    ),
                })
                .collect::<bohmflow::Result<Vec<_>>>()
                .ctx(task, what)?
        }
        (_, None) => return Err(ConfigError::Missing("surface".into()).into()),
    };
    Ok((method, tracks))
}

#[derive(Serialize)]
struct TrackSummary {
    index: usize,
    start: [f64; 3],
    t_range: (f64, f64),
    points: usize,
    continuous: bool,
    blowups: usize,
    warnings: usize,
    solver_calls: u64,
    max_residual: f64,
}

fn nodal_track(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let (method, tracks) = node_tracks(cfg, Task::NodalTrack)?;
    let mut artifacts = Artifacts::default();
    let mut summaries = Vec::new();
    for (i, track) in tracks.iter().enumerate() {
        artifacts.add(format!("nodes_{i}.csv"), |w| track.write_csv(w));
        summaries.push(TrackSummary {
            index: i,
            start: track.points[0].x,
            t_range: track.t_range(),
            points: track.points.len(),
            continuous: track.is_continuous(),
            blowups: track.blowups.len(),
            warnings: track.warnings.len(),
            solver_calls: track.solver_calls,
            max_residual: track.points.iter().map(|p| p.residual).fold(0.0, f64::max),
        });
    }
    artifacts.json(
        "nodal.json",
        &serde_json::json!({ "method": method, "tracks": summaries, "blowups": tracks.iter().map(|t| &t.blowups).collect::<Vec<_>>() }),
    );
    let total: usize = tracks.iter().map(|t| t.points.len()).sum();
    Ok((
        artifacts,
        format!(
            "{} track(s), {total} nodal points ({method:?})",
            tracks.len()
        ),
    ))
}

fn xpoints(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Xpoint;
    let spec = cfg.spec()?;
    let surface = scenario_surface(cfg, spec.omegas[2])?;
    if !matches!(surface.family, SurfaceFamily::Sphere | SurfaceFamily::Pear) {
        return Err(ConfigError::invalid(
            "surface.family",
            "X-points are searched on spheres and pears",
        )
        .into());
    }
    let times = if cfg.xpoint.times.is_empty() {
        let sc = cfg.scenario()?;
        let n = ((sc.t1 - sc.t0) / cfg.xpoint.dt + 1e-9).floor() as usize;
        (0..=n).map(|k| sc.t0 + k as f64 * cfg.xpoint.dt).collect()
    } else {
        cfg.xpoint.times.clone()
    };
    let per_time: Vec<(Vec<_>, Vec<_>)> = times
        .par_iter()
        .map(|&t| {
            let nodes = match surface.family {
                SurfaceFamily::Sphere => [Branch::Plus, Branch::Minus]
                    .iter()
                    .map(|&b| nodal_closed_form_sphere_branch(&spec, t, surface.c_value.sqrt(), b))
                    .collect::<bohmflow::Result<Vec<_>>>(),
                _ => scan_surface_nodes(&spec, &surface, t, cfg.nodal.scan_grid),
            }
            .ctx(task, || format!("nodes at t={t}"))?;
            let mut found = Vec::new();
            let mut misses = Vec::new();
            for node in &nodes {
                match xpoint_find(&spec, &surface, node) {
                    Ok(x) => found.push(x),
                    Err(e) => misses.push(
                        serde_json::json!({ "t": t, "node": node.x, "reason": e.to_string() }),
                    ),
                }
            }
            Ok((found, misses))
        })
        .collect::<Result<_, CliError>>()?;
    let (found, misses): (Vec<_>, Vec<_>) = per_time.into_iter().unzip();
    let found: Vec<_> = found.into_iter().flatten().collect();
    let misses: Vec<_> = misses.into_iter().flatten().collect();
    let mut artifacts = Artifacts::default();
    artifacts.add("xpoints.csv", |w| write_xpoints_csv(w, &found));
    artifacts.json(
        "xpoint.json",
        &serde_json::json!({ "times": times, "found": found, "misses": misses }),
    );
    Ok((
        artifacts,
        format!(
            "{} X-point(s) at {} time(s), {} node(s) without one",
            found.len(),
            times.len(),
            misses.len()
        ),
    ))
}

#[derive(Serialize)]
struct OrderDeviation {
    order: u32,
    mean: [f64; 3],
    overall_mean: f64,
    max: f64,
}

fn perturb(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Perturb;
    let spec = cfg.spec()?;
    let sc = cfg.scenario()?;
    if sc.t0 != 0.0 {
        return Err(ConfigError::invalid("scenario.t0", "series start at t = 0").into());
    }
    let points = cfg.initial_points()?;
    let pdt = cfg.perturb.dt;
    let runs = points
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let what = || format!("orbit {i} from {x0:?}");
            let traj = integrate(&spec, *x0, sc.t0, sc.t1, &cfg.integrator).ctx(task, what)?;
            let mut orders = Vec::new();
            for k in 1..=cfg.perturb.order {
                let series = iterate_order(&spec, *x0, k)
                    .ctx(task, || format!("{}: order {k} series", what()))?;
                let dev = deviation(&series, &traj, pdt).ctx(task, what)?;
                orders.push((series, dev));
            }
            Ok((traj, orders))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut artifacts = Artifacts::default();
    let mut orbits = Vec::new();
    for (i, (traj, orders)) in runs.iter().enumerate() {
        write_trajectory(
            &mut artifacts,
            format!("trajectory_{i}.csv"),
            traj,
            sc.sample_dt.or(Some(pdt)),
        );
        let mut devs = Vec::new();
        for (series, dev) in orders {
            let k = series.order;
            let json = series.to_json().ctx(task, || format!("order {k} series"))?;
            artifacts.add(format!("series_{i}_order{k}.json"), |w| {
                writeln!(w, "{json}")
            });
            artifacts.add(format!("series_{i}_order{k}.csv"), |w| {
                writeln!(w, "t,x,y,z")?;
                for t in &dev.times {
                    let p = series.evaluate(*t);
                    writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", t, p[0], p[1], p[2])?;
                }
                Ok(())
            });
            artifacts.add(format!("deviation_{i}_order{k}.csv"), |w| dev.write_csv(w));
            devs.push(OrderDeviation {
                order: k,
                mean: dev.mean,
                overall_mean: dev.overall_mean(),
                max: dev.max(),
            });
        }
        let plane = match formal_integral_surface(&orders[0].0) {
            Ok(fi) => match fi.relation {
                IntegralRelation::Plane { point, normal } => {
                    serde_json::json!({ "point": point, "normal": normal })
                }
                other => serde_json::to_value(other).expect("relation serializes"),
            },
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        };
        orbits.push(serde_json::json!({ "index": i, "x0": points[i], "deviations": devs, "order1_plane": plane }));
    }
    artifacts.json(
        "perturb.json",
        &serde_json::json!({ "task": task, "orbits": orbits }),
    );
    let last = runs
        .iter()
        .filter_map(|(_, o)| o.last().map(|(_, d)| d.overall_mean()))
        .fold(0.0, f64::max);
    Ok((
        artifacts,
        format!(
            "{} orbit(s), order-{} mean deviation {last:.3e}",
            runs.len(),
            cfg.perturb.order
        ),
    ))
}

fn project(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Project;
    let spec = cfg.spec()?;
    let surface = scenario_surface(cfg, spec.omegas[2])?;
    let chart = Chart::for_surface(&surface)
        .map_err(|e| ConfigError::invalid("surface.family", e.to_string()))?;
    let points: Vec<[f64; 3]> = match cfg.project.source {
        ProjectSource::Nodes => {
            let (_, tracks) = node_tracks(cfg, task)?;
            tracks
                .iter()
                .flat_map(|t| t.points.iter().map(|p| p.x))
                .collect()
        }
        ProjectSource::Orbits => {
            let sc = cfg.scenario()?;
            let dt = sc.sample_dt.unwrap_or(0.05);
            let orbits = cfg
                .initial_points()?
                .par_iter()
                .enumerate()
                .map(|(i, x0)| {
                    let what = || format!("orbit {i} from {x0:?}");
                    let traj =
                        integrate(&spec, *x0, sc.t0, sc.t1, &cfg.integrator).ctx(task, what)?;
                    Ok(traj
                        .sample_uniform(dt)
                        .ctx(task, what)?
                        .into_iter()
                        .map(|(_, x)| x)
                        .collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            orbits.concat()
        }
    };
    let binner = Binner::new(chart, cfg.project.bins, DEFAULT_CHART_TOLERANCE)
        .ctx(task, || "chart binning".into())?;
    let hist = binner
        .histogram(&points)
        .ctx(task, || "chart binning".into())?;
    let special = match (surface.family, cfg.project.source) {
        (SurfaceFamily::Sphere, ProjectSource::Nodes) => Some(
            azimuth_mass_near(&points, &sphere_special_azimuths(spec.omegas), 0.1, 0.5)
                .ctx(task, || "azimuth mass".into())?,
        ),
        _ => None,
    };
    let mut artifacts = Artifacts::default();
    artifacts.add("occupancy.csv", |w| hist.write_csv(w));
    artifacts.json(
        "project.json",
        &serde_json::json!({
            "source": cfg.project.source,
            "surface": SurfaceInfo::from(&surface),
            "bins": cfg.project.bins,
            "points": hist.total(),
            "visited_fraction": hist.visited_fraction(),
            "special_direction_mass": special,
        }),
    );
    let mut summary = format!(
        "{} point(s), {:.1}% of bins visited",
        hist.total(),
        100.0 * hist.visited_fraction()
    );
    if let Some(m) = special {
        summary += &format!(
            ", {:.1}% of the azimuth mass near the special directions",
            100.0 * m
        );
    }
    Ok((artifacts, summary))
}

/// Node tracks an orbit on `surface` is compared against.
fn tracks_for_orbit(
    cfg: &RunConfig,
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    x0: &[f64; 3],
) -> bohmflow::Result<Vec<NodalTrack>> {
    let sc = cfg.scenario.as_ref().expect("scenario checked");
    match surface.family {
        SurfaceFamily::Sphere => [Branch::Plus, Branch::Minus]
            .iter()
            .map(|&b| {
                closed_form_track(spec, surface.c_value.sqrt(), sc.t0, sc.t1, cfg.nodal.dt, b)
            })
            .collect(),
        SurfaceFamily::Pear => scan_surface_nodes(spec, surface, sc.t0, cfg.nodal.scan_grid)?
            .iter()
            .filter(|n| n.x[2].signum() == x0[2].signum())
            .map(|n| track_surface_ode(spec, surface, n, sc.t1))
            .collect(),
        _ => Ok(Vec::new()),
    }
}

fn report(cfg: &RunConfig) -> Result<(Artifacts, String), CliError> {
    let task = Task::Report;
    let spec = cfg.spec()?;
    let sc = cfg.scenario()?;
    let block = cfg.surface()?;
    let points = cfg.initial_points()?;
    let th = LabelThresholds::default();
    let runs: Vec<(Trajectory<f64>, OrbitReport)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let what = || format!("orbit {i} from {x0:?}");
            let surface = block.for_point(x0, spec.omegas[2]).ctx(task, what)?;
            let tracks = tracks_for_orbit(cfg, &spec, &surface, x0)
                .ctx(task, || format!("{}: node tracks", what()))?;
            analyze_orbit(
                &spec,
                *x0,
                (sc.t0, sc.t1),
                &cfg.integrator,
                &surface,
                &tracks,
                &th,
            )
            .ctx(task, what)
        })
        .collect::<Result<_, CliError>>()?;
    let mut artifacts = Artifacts::default();
    let mut reports = Vec::new();
    for (i, (traj, r)) in runs.into_iter().enumerate() {
        write_trajectory(
            &mut artifacts,
            format!("trajectory_{i}.csv"),
            &traj,
            sc.sample_dt,
        );
        reports.push(r);
    }
    artifacts.json(
        "report.json",
        &serde_json::json!({ "task": task, "thresholds": th, "orbits": reports }),
    );
    let labels: Vec<String> = reports
        .iter()
        .map(|r| {
            serde_json::to_value(r.label)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        })
        .collect();
    Ok((
        artifacts,
        format!("{} orbit(s): {}", reports.len(), labels.join(", ")),
    ))
}
