//! Orbit-level indicators: surface drift, node approaches, chart occupancy
//! and the heuristic ordered/chaotic labels built from them.
//!
//! The labels are candidates only. They combine a retrace error, the closest
//! approach to a nodal point and the fraction of chart bins an orbit visits.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, retrace_error, IntegratorConfig, Trajectory};
use crate::linalg::{dist, Vec3};
use crate::nodal::NodalTrack;
use crate::scalar::Real;
use crate::surfaces::{sphere_coords, IntegralSurface, PearChart, SurfaceFamily};
use crate::wavefunction::WaveSpec;

/// `|f(x) − C|` at every stored step of `traj`.
pub fn surface_drift<T: Real>(traj: &Trajectory<T>, surface: &IntegralSurface) -> Result<Vec<f64>> {
    traj.points
        .iter()
        .map(|p| Ok(surface.residual(&p.map(|v| v.as_f64()))?.abs()))
        .collect()
}

/// Closest approach of an orbit to a nodal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeApproach {
    pub min_distance: f64,
    pub t_min: f64,
    /// Initial stretch of time during which the orbit stays within `d_loop`
    /// of the node; `None` if it starts farther away.
    pub loop_interval: Option<(f64, f64)>,
}

pub const DEFAULT_LOOP_DISTANCE: f64 = 0.5;

/// Time-aligned distance between `traj` and `track`. See [`node_approach_any`].
pub fn node_approach(traj: &Trajectory<f64>, track: &NodalTrack, d_loop: f64) -> Result<NodeApproach> {
    node_approach_any(traj, std::slice::from_ref(track), d_loop)
}

/// Distance from the orbit to the nearest of several node tracks (e.g. the
/// antipodal branches of one nodal line). Both curves are interpolated on the
/// union of their sample times; instants inside a track's blowup gap are
/// skipped for that track.
pub fn node_approach_any(traj: &Trajectory<f64>, tracks: &[NodalTrack], d_loop: f64) -> Result<NodeApproach> {
    if traj.is_empty() || tracks.is_empty() {
        return Err(Error::InvalidInput("need a trajectory and at least one track".into()));
    }
    let lo = traj.times[0];
    let hi = *traj.times.last().unwrap();
    let slack = 1e-9 * (1.0 + hi.abs());
    for track in tracks {
        if track.points.is_empty() {
            return Err(Error::SpanMismatch("empty nodal track".into()));
        }
        let (a, b) = track.t_range();
        if a > lo + slack || b < hi - slack {
            return Err(Error::SpanMismatch(format!("track covers [{a}, {b}], orbit needs [{lo}, {hi}]")));
        }
    }
    let mut times: Vec<f64> = traj.times.clone();
    for track in tracks {
        times.extend(track.points.iter().map(|p| p.t).filter(|t| (lo..=hi).contains(t)));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut best = NodeApproach {
        min_distance: f64::INFINITY,
        t_min: lo,
        loop_interval: None,
    };
    let mut looping = true;
    let mut loop_end = None;
    for &t in &times {
        let x = traj.interpolate(t)?;
        let d = tracks
            .iter()
            .filter_map(|tr| tr.interpolate(t.clamp(tr.t_range().0, tr.t_range().1)).ok())
            .map(|n| dist(&x, &n))
            .fold(f64::INFINITY, f64::min);
        if !d.is_finite() {
            continue;
        }
        if d < best.min_distance {
            best.min_distance = d;
            best.t_min = t;
        }
        if looping {
            if d < d_loop {
                loop_end = Some(t);
            } else {
                looping = false;
            }
        }
    }
    if !best.min_distance.is_finite() {
        return Err(Error::SpanMismatch("no instant where a node is defined".into()));
    }
    best.loop_interval = loop_end.map(|e| (lo, e));
    Ok(best)
}

/// Two-dimensional chart of an integral surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chart {
    /// `(θ, φ)` with `θ ∈ [0, π]`, `φ ∈ (−π, π]`.
    SphereThetaPhi { radius: f64 },
    /// `(s, φ)` with `s` the meridian arc length measured from the bottom tip.
    PearSPhi(PearChart),
}

impl Chart {
    pub fn for_surface(surface: &IntegralSurface) -> Result<Self> {
        match surface.family {
            SurfaceFamily::Sphere => Ok(Self::SphereThetaPhi {
                radius: surface.c_value.sqrt(),
            }),
            SurfaceFamily::Pear => {
                let (z_min, _) = crate::surfaces::pear_z_range(surface.c_value, surface.omega3)?;
                Ok(Self::PearSPhi(PearChart::new(surface.c_value, surface.omega3, z_min)?))
            }
            _ => Err(Error::Unsupported("charts exist for the sphere and the pear only".into())),
        }
    }

    fn u_range(&self) -> Result<(f64, f64)> {
        match self {
            Self::SphereThetaPhi { .. } => Ok((0.0, PI)),
            Self::PearSPhi(chart) => Ok((0.0, chart.meridian_length()?)),
        }
    }
}

/// Normalized 2-D histogram over a chart; `fractions[iu * nv + iv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub u_edges: Vec<f64>,
    pub v_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub fractions: Vec<f64>,
}

impl Histogram {
    pub fn shape(&self) -> (usize, usize) {
        (self.u_edges.len() - 1, self.v_edges.len() - 1)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of bins holding at least one point.
    pub fn visited_fraction(&self) -> f64 {
        self.counts.iter().filter(|&&c| c > 0).count() as f64 / self.counts.len() as f64
    }

    /// CSV `bin_u,bin_v,count`: bin centers and the normalized count.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_u,bin_v,count")?;
        let (nu, nv) = self.shape();
        for iu in 0..nu {
            let u = 0.5 * (self.u_edges[iu] + self.u_edges[iu + 1]);
            for iv in 0..nv {
                let v = 0.5 * (self.v_edges[iv] + self.v_edges[iv + 1]);
                writeln!(w, "{:.10e},{:.10e},{:.10e}", u, v, self.fractions[iu * nv + iv])?;
            }
        }
        Ok(())
    }
}

/// Bins points of one surface into a chart.
#[derive(Debug, Clone)]
pub struct Binner {
    chart: Chart,
    nu: usize,
    nv: usize,
    u_edges: Vec<f64>,
    /// Pear only: heights of the `s` edges, so binning needs no quadrature.
    z_edges: Vec<f64>,
    tol: f64,
}

/// Allowed `|f(x) − C|` for occupancy input.
pub const DEFAULT_CHART_TOLERANCE: f64 = 1e-3;

impl Binner {
    pub fn new(chart: Chart, bins: [usize; 2], tol: f64) -> Result<Self> {
        let [nu, nv] = bins;
        if nu == 0 || nv == 0 {
            return Err(Error::InvalidInput("histogram needs at least one bin per axis".into()));
        }
        let (u0, u1) = chart.u_range()?;
        let u_edges: Vec<f64> = (0..=nu).map(|k| u0 + (u1 - u0) * k as f64 / nu as f64).collect();
        let z_edges = match &chart {
            Chart::PearSPhi(p) => {
                let mut z: Vec<f64> = u_edges[1..nu].iter().map(|&s| p.z_at_arc(s)).collect::<Result<_>>()?;
                z.insert(0, p.z_min);
                z.push(p.z_max);
                z
            }
            Chart::SphereThetaPhi { .. } => Vec::new(),
        };
        Ok(Self {
            chart,
            nu,
            nv,
            u_edges,
            z_edges,
            tol,
        })
    }

    /// Bin indices `(iu, iv)` of a point.
    fn bin_of(&self, x: &Vec3<f64>) -> Result<(usize, usize)> {
        let phi = x[1].atan2(x[0]);
        let iu = match &self.chart {
            Chart::SphereThetaPhi { radius } => {
                let residual = x.iter().map(|v| v * v).sum::<f64>() - radius * radius;
                if !(residual.abs() <= self.tol) {
                    return Err(Error::OffSurface { residual });
                }
                let theta = sphere_coords(x)?.theta;
                ((theta / PI * self.nu as f64) as usize).min(self.nu - 1)
            }
            Chart::PearSPhi(p) => {
                let z = p.checked_height(x, self.tol)?;
                let k = self.z_edges.partition_point(|&e| e <= z);
                k.clamp(1, self.nu) - 1
            }
        };
        let iv = (((phi + PI) / (2.0 * PI) * self.nv as f64) as usize).min(self.nv - 1);
        Ok((iu, iv))
    }

    pub fn histogram(&self, points: &[Vec3<f64>]) -> Result<Histogram> {
        let mut counts = vec![0u64; self.nu * self.nv];
        for x in points {
            let (iu, iv) = self.bin_of(x)?;
            counts[iu * self.nv + iv] += 1;
        }
        let total = counts.iter().sum::<u64>().max(1) as f64;
        Ok(Histogram {
            u_edges: self.u_edges.clone(),
            v_edges: (0..=self.nv).map(|k| -PI + 2.0 * PI * k as f64 / self.nv as f64).collect(),
            fractions: counts.iter().map(|&c| c as f64 / total).collect(),
            counts,
        })
    }

    fn bin_set(&self, points: &[Vec3<f64>]) -> Result<HashSet<(usize, usize)>> {
        points.iter().map(|x| self.bin_of(x)).collect()
    }
}

/// Normalized occupancy histogram of `points` (orbit or node samples).
pub fn occupancy(points: &[Vec3<f64>], chart: Chart, bins: [usize; 2]) -> Result<Histogram> {
    Binner::new(chart, bins, DEFAULT_CHART_TOLERANCE)?.histogram(points)
}

/// Azimuths where the spherical nodal line crosses `z = 0`:
/// `±arctan√(ω₁/ω₂)` and their antipodes.
pub fn sphere_special_azimuths(omegas: [f64; 3]) -> [f64; 4] {
    let a = (omegas[0] / omegas[1]).sqrt().atan();
    [a, -a, PI - a, a - PI]
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Fraction of the points, outside polar caps of half-angle `polar_cap`,
/// whose azimuth lies within `half_width` of one of `directions`.
pub fn azimuth_mass_near(points: &[Vec3<f64>], directions: &[f64], half_width: f64, polar_cap: f64) -> Result<f64> {
    let mut inside = 0usize;
    let mut total = 0usize;
    for x in points {
        let c = sphere_coords(x)?;
        if c.theta < polar_cap || c.theta > PI - polar_cap {
            continue;
        }
        total += 1;
        if directions.iter().any(|&d| wrap_angle(c.phi - d).abs() <= half_width) {
            inside += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("no points outside the polar caps".into()));
    }
    Ok(inside as f64 / total as f64)
}

/// Share of the orbit's chart bins that a node also visits in the same time
/// window: `Σ_w |O_w ∩ N_w| / Σ_w |O_w|`.
pub fn time_binned_overlap(
    orbit: &[(f64, Vec3<f64>)],
    nodes: &[(f64, Vec3<f64>)],
    binner: &Binner,
    window: f64,
) -> Result<f64> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let (Some(t0), Some(t1)) = (orbit.first().map(|p| p.0), orbit.last().map(|p| p.0)) else {
        return Err(Error::InvalidInput("empty orbit".into()));
    };
    let n_win = (((t1 - t0) / window).floor() as usize) + 1;
    let slot = |t: f64| (((t - t0) / window).floor().max(0.0) as usize).min(n_win - 1);
    let mut orbit_bins = vec![Vec::new(); n_win];
    let mut node_bins = vec![Vec::new(); n_win];
    for &(t, x) in orbit {
        orbit_bins[slot(t)].push(x);
    }
    for &(t, x) in nodes.iter().filter(|p| (t0..=t1).contains(&p.0)) {
        node_bins[slot(t)].push(x);
    }
    let (mut shared, mut total) = (0usize, 0usize);
    for (o, n) in orbit_bins.iter().zip(&node_bins) {
        let o = binner.bin_set(o)?;
        let n = binner.bin_set(n)?;
        total += o.len();
        shared += o.intersection(&n).count();
    }
    Ok(if total == 0 { 0.0 } else { shared as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrbitLabel {
    OrderedCandidate,
    ChaoticCandidate,
    Unlabeled,
}

/// Knobs of the labeling heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    /// Close-encounter distance in units of the surface length scale
    /// (`R` on a sphere).
    pub d_close: f64,
    pub retrace: f64,
    /// Fraction of chart bins visited above which an orbit is "spread out".
    pub spread: f64,
    pub bins: [usize; 2],
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self {
            d_close: 0.2,
            retrace: 1e-3,
            spread: 0.4,
            bins: [18, 36],
        }
    }
}

/// Ordered needs a clean retrace, no close node encounter and a narrow
/// footprint; any one failing marks a chaotic candidate. An indicator that
/// could not be computed (NaN) leaves an otherwise clean orbit unlabeled.
/// `node_distance` is already divided by the surface length scale.
pub fn label(retrace_error: f64, node_distance: f64, spread: f64, th: &LabelThresholds) -> OrbitLabel {
    if retrace_error >= th.retrace || node_distance < th.d_close || spread >= th.spread {
        OrbitLabel::ChaoticCandidate
    } else if retrace_error.is_nan() || node_distance.is_nan() || spread.is_nan() {
        OrbitLabel::Unlabeled
    } else {
        OrbitLabel::OrderedCandidate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub x0: Vec3<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub surface_drift_max: f64,
    pub min_node_distance: f64,
    pub t_min: f64,
    pub node_loop_interval: Option<(f64, f64)>,
    pub retrace_error: f64,
    pub spread: f64,
    pub label: OrbitLabel,
}

impl OrbitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Integrates `x0` over `[t0, t1]` and fills an [`OrbitReport`] against the
/// given surface and node tracks (none: the node distance is NaN).
/// Surfaces without a chart (open) get a NaN spread.
pub fn analyze_orbit(
    spec: &WaveSpec<f64>,
    x0: Vec3<f64>,
    (t0, t1): (f64, f64),
    cfg: &IntegratorConfig,
    surface: &IntegralSurface,
    tracks: &[NodalTrack],
    th: &LabelThresholds,
) -> Result<(Trajectory<f64>, OrbitReport)> {
    let traj = integrate(spec, x0, t0, t1, cfg)?;
    let drift = surface_drift(&traj, surface)?;
    let approach = if tracks.is_empty() {
        NodeApproach {
            min_distance: f64::NAN,
            t_min: f64::NAN,
            loop_interval: None,
        }
    } else {
        node_approach_any(&traj, tracks, DEFAULT_LOOP_DISTANCE)?
    };
    let retrace = retrace_error(spec, x0, t0, t1, cfg)?;
    // open surfaces have no chart: spread is NaN there
    let spread = match Chart::for_surface(surface) {
        Ok(chart) => {
            let binner = Binner::new(chart, th.bins, DEFAULT_CHART_TOLERANCE)?;
            let samples: Vec<Vec3<f64>> = traj.sample_uniform(0.05)?.into_iter().map(|(_, x)| x).collect();
            binner.histogram(&samples)?.visited_fraction()
        }
        Err(Error::Unsupported(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let report = OrbitReport {
        x0,
        t_start: t0,
        t_end: t1,
        surface_drift_max: drift.iter().copied().fold(0.0, f64::max),
        min_node_distance: approach.min_distance,
        t_min: approach.t_min,
        node_loop_interval: approach.loop_interval,
        retrace_error: retrace,
        spread,
        label: label(retrace, approach.min_distance / surface.length_scale(), spread, th),
    };
    Ok((traj, report))
}
