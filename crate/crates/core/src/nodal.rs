//! Nodal points (Ψ = 0): closed form on the sphere, root finding, three
//! continuation trackers and the saddle (X-point) of the co-moving flow.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eigenbasis::envelope;
use crate::error::{Error, Result};
use crate::flow::{velocity, DEFAULT_P_FLOOR};
use crate::integrator::{hermite_interpolate, IntegratorConfig, Rkf45};
use crate::linalg::{add, cross, dist, dot, eig2, min_norm_2x3, norm, normalize, scale, solve2, solve3, sub, Vec3};
use crate::surfaces::{sphere_coords, IntegralSurface, PhiFunction, SurfaceFamily};
use crate::wavefunction::{reduced_sample, WaveSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeMethod {
    ClosedForm,
    Rootfind,
    Fplane,
    SurfNewton,
    SurfOde,
}

impl fmt::Display for NodeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeMethod::ClosedForm => "CLOSED_FORM",
            NodeMethod::Rootfind => "ROOTFIND",
            NodeMethod::Fplane => "FPLANE",
            NodeMethod::SurfNewton => "SURF_NEWTON",
            NodeMethod::SurfOde => "SURF_ODE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalPoint {
    pub x: Vec3<f64>,
    pub t: f64,
    pub method: NodeMethod,
    /// `|Ψ|` at `x`.
    pub residual: f64,
}

impl NodalPoint {
    fn new(spec: &WaveSpec<f64>, x: Vec3<f64>, t: f64, method: NodeMethod) -> Self {
        Self {
            x,
            t,
            method,
            residual: psi_modulus(spec, &x, t),
        }
    }
}

fn psi_modulus(spec: &WaveSpec<f64>, x: &Vec3<f64>, t: f64) -> f64 {
    let r = reduced_sample(spec, x, t);
    envelope(&spec.omegas, x) * r.density().sqrt()
}

/// Local frame of the F-plane tracker at one output point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FPlaneData {
    /// Unit tangent of the nodal line, `∇P_R × ∇P_I` normalized.
    pub tangent: Vec3<f64>,
    /// Coordinate (0, 1, 2 for x, y, z) currently parameterizing the line.
    pub axis: usize,
}

/// The node left the cutoff ball and the track was re-seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent {
    pub t_exit: f64,
    pub exit_point: Vec3<f64>,
    pub t_resume: f64,
    pub resume_point: Vec3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrackWarning {
    /// Node displacement per step `|dN/dt|·dt` exceeded the trust radius.
    LargeVelocity { t: f64, speed: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalTrack {
    pub method: NodeMethod,
    pub points: Vec<NodalPoint>,
    /// Node velocity at each point.
    pub velocities: Vec<Vec3<f64>>,
    /// Set on the first point after a re-seed.
    pub reseeded: Vec<bool>,
    /// Only filled by the F-plane tracker.
    pub fplane: Vec<FPlaneData>,
    pub blowups: Vec<BlowupEvent>,
    pub warnings: Vec<TrackWarning>,
    /// Newton iterations (linear solves) spent on residual equations.
    pub solver_calls: u64,
}

impl NodalTrack {
    fn empty(method: NodeMethod) -> Self {
        Self {
            method,
            points: Vec::new(),
            velocities: Vec::new(),
            reseeded: Vec::new(),
            fplane: Vec::new(),
            blowups: Vec::new(),
            warnings: Vec::new(),
            solver_calls: 0,
        }
    }

    fn push(&mut self, p: NodalPoint, v: Vec3<f64>, reseeded: bool) {
        self.points.push(p);
        self.velocities.push(v);
        self.reseeded.push(reseeded);
    }

    /// True when the track never left the cutoff ball.
    pub fn is_continuous(&self) -> bool {
        self.blowups.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.points[0].t, self.points[self.points.len() - 1].t)
    }

    /// Cubic Hermite interpolation of the node position; fails across a re-seed.
    pub fn interpolate(&self, t: f64) -> Result<Vec3<f64>> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::SpanMismatch("empty track".into()));
        }
        let (Ok(i) | Err(i)) = self.points.binary_search_by(|p| p.t.total_cmp(&t));
        if i < n && self.reseeded[i] && self.points[i].t != t {
            return Err(Error::SpanMismatch(format!("t={t} falls in a blowup gap")));
        }
        // only the bracketing pair matters for a cubic Hermite segment
        let lo = i.saturating_sub(1).min(n.saturating_sub(2));
        let hi = (lo + 2).min(n);
        let times: Vec<f64> = self.points[lo..hi].iter().map(|p| p.t).collect();
        let pos: Vec<Vec3<f64>> = self.points[lo..hi].iter().map(|p| p.x).collect();
        hermite_interpolate(&times, &pos, &self.velocities[lo..hi], t)
    }

    /// CSV `t,x,y,z,method,residual,blowup_flag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,z,method,residual,blowup_flag")?;
        for (p, flag) in self.points.iter().zip(&self.reseeded) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.6e},{}",
                p.t, p.x[0], p.x[1], p.x[2], p.method, p.residual, *flag as u8
            )?;
        }
        Ok(())
    }
}

/// Knobs shared by the trackers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    /// Node norm treated as "at infinity". The two nodal conditions become
    /// nearly dependent far out, so the cost of following an escape grows
    /// roughly with the square of this radius.
    pub cutoff: f64,
    /// `|dN/dt|·dt` above which a `LargeVelocity` warning is recorded.
    pub trust_radius: f64,
    pub max_newton: usize,
    /// Evaluate the wavefunction at this fixed time instead of the track time.
    pub frozen_time: Option<f64>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            cutoff: 100.0,
            trust_radius: 0.02,
            max_newton: 50,
            frozen_time: None,
        }
    }
}

impl TrackOptions {
    fn eval_time(&self, t: f64) -> f64 {
        self.frozen_time.unwrap_or(t)
    }
}

/// Sign of the overall factor in the closed-form spherical node; the two
/// branches are antipodal points of the same nodal line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

const SPHERE_MODES: [[u32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

fn require_sphere_case(spec: &WaveSpec<f64>) -> Result<[f64; 3]> {
    if spec.quantum_numbers() != SPHERE_MODES {
        return Err(Error::InvalidInput("closed form needs modes 100/010/001".into()));
    }
    if !spec.has_real_amplitudes() {
        return Err(Error::Unsupported("closed form needs real amplitudes".into()));
    }
    let abc = spec.amplitudes.map(|a| a.re);
    if abc.contains(&0.0) {
        return Err(Error::InvalidInput("closed form needs nonzero amplitudes".into()));
    }
    Ok(abc)
}

/// Node of the 100/010/001 superposition on the sphere of radius `radius`.
pub fn nodal_closed_form_sphere(spec: &WaveSpec<f64>, t: f64, radius: f64) -> Result<NodalPoint> {
    nodal_closed_form_sphere_branch(spec, t, radius, Branch::Plus)
}

pub fn nodal_closed_form_sphere_branch(spec: &WaveSpec<f64>, t: f64, radius: f64, branch: Branch) -> Result<NodalPoint> {
    let abc = require_sphere_case(spec)?;
    let [w1, w2, w3] = spec.omegas;
    let dir = [
        ((w3 - w2) * t).sin() / (abc[0] * w1.sqrt()),
        ((w1 - w3) * t).sin() / (abc[1] * w2.sqrt()),
        ((w2 - w1) * t).sin() / (abc[2] * w3.sqrt()),
    ];
    let n = norm(&dir);
    if n < 1e-300 || !n.is_finite() {
        return Err(Error::Indeterminate(format!("all phase differences vanish at t={t}")));
    }
    let s = match branch {
        Branch::Plus => radius / n,
        Branch::Minus => -radius / n,
    };
    Ok(NodalPoint::new(spec, scale(&dir, s), t, NodeMethod::ClosedForm))
}

/// Closed-form track sampled every `dt` on `[t0, t1]`.
pub fn closed_form_track(spec: &WaveSpec<f64>, radius: f64, t0: f64, t1: f64, dt: f64, branch: Branch) -> Result<NodalTrack> {
    check_span(t0, t1, dt)?;
    let surface = IntegralSurface::sphere(radius)?;
    let mut track = NodalTrack::empty(NodeMethod::ClosedForm);
    for t in time_grid(t0, t1, dt) {
        let p = nodal_closed_form_sphere_branch(spec, t, radius, branch)?;
        let v = surface_node_velocity(spec, &surface, &p.x, t)?;
        track.push(p, v, false);
    }
    Ok(track)
}

fn check_span(t0: f64, t1: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(Error::InvalidInput(format!("need t1 > t0 and dt > 0 (t0={t0}, t1={t1}, dt={dt})")));
    }
    Ok(())
}

fn time_grid(t0: f64, t1: f64, dt: f64) -> impl Iterator<Item = f64> {
    let n = ((t1 - t0) / dt - 1e-9).ceil() as usize;
    (0..=n).map(move |k| (t0 + k as f64 * dt).min(t1))
}

/// Options for [`nodal_find_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FindOptions {
    pub max_iter: usize,
    /// Give up when the iterate moves farther than this from the guess.
    pub max_travel: f64,
}

impl Default for FindOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            max_travel: 1.0,
        }
    }
}

/// Nearest point of the nodal line to `guess` at time `t`.
pub fn nodal_find(spec: &WaveSpec<f64>, t: f64, guess: &Vec3<f64>) -> Result<NodalPoint> {
    nodal_find_with(spec, t, guess, &FindOptions::default())
}

pub fn nodal_find_with(spec: &WaveSpec<f64>, t: f64, guess: &Vec3<f64>, opts: &FindOptions) -> Result<NodalPoint> {
    let mut x = *guess;
    let mut res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let r = reduced_sample(spec, &x, t);
        res = r.density().sqrt();
        let dx = min_norm_2x3(&r.grad_re, &r.grad_im, &[-r.p_re, -r.p_im]).ok_or(Error::NoConvergence {
            iterations: opts.max_iter,
            residual: res,
        })?;
        x = add(&x, &dx);
        if !x.iter().all(|v| v.is_finite()) || dist(&x, guess) > opts.max_travel {
            break;
        }
        if norm(&dx) <= 1e-13 * (1.0 + norm(&x)) {
            let r = reduced_sample(spec, &x, t);
            if r.density().sqrt() <= 1e-11 * (1.0 + r.scale) {
                return Ok(NodalPoint::new(spec, x, t, NodeMethod::Rootfind));
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Newton on `[P_R, P_I, c(x)] = 0` where `c` is a scalar constraint with gradient.
/// Returns the root and the number of linear solves.
fn newton3<C>(
    spec: &WaveSpec<f64>,
    t: f64,
    guess: &Vec3<f64>,
    max_iter: usize,
    max_travel: f64,
    constraint: C,
) -> Result<(Vec3<f64>, usize)>
where
    C: Fn(&Vec3<f64>) -> Result<(f64, Vec3<f64>)>,
{
    let mut x = *guess;
    for it in 1..=max_iter {
        let r = reduced_sample(spec, &x, t);
        let (c, gc) = constraint(&x)?;
        let dx = solve3(&[r.grad_re, r.grad_im, gc], &[-r.p_re, -r.p_im, -c]).ok_or(Error::NewtonDiverged { t })?;
        x = add(&x, &dx);
        if !x.iter().all(|v| v.is_finite()) || dist(&x, guess) > max_travel {
            return Err(Error::NewtonDiverged { t });
        }
        if norm(&dx) <= 1e-12 * (1.0 + norm(&x)) {
            return Ok((x, it));
        }
    }
    Err(Error::NewtonDiverged { t })
}

/// Node on `surface` nearest (in the Newton sense) to `guess`.
pub fn node_on_surface(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    t: f64,
    guess: &Vec3<f64>,
    max_iter: usize,
) -> Result<(Vec3<f64>, usize)> {
    newton3(spec, t, guess, max_iter, f64::INFINITY, |x| {
        Ok((surface.residual(x)?, surface.gradient(x)?))
    })
}

/// Node on the plane through `origin` with unit normal `normal`.
fn node_on_plane(
    spec: &WaveSpec<f64>,
    t: f64,
    origin: &Vec3<f64>,
    normal: &Vec3<f64>,
    max_iter: usize,
) -> Result<(Vec3<f64>, usize)> {
    newton3(spec, t, origin, max_iter, f64::INFINITY, |x| Ok((dot(&sub(x, origin), normal), *normal)))
}

/// Velocity of a node constrained to a surface, from the linearized
/// conditions `∇P·Ṅ + ∂P/∂t = 0` and `∇f·Ṅ = 0`.
pub fn surface_node_velocity(spec: &WaveSpec<f64>, surface: &IntegralSurface, x: &Vec3<f64>, t: f64) -> Result<Vec3<f64>> {
    let r = reduced_sample(spec, x, t);
    let g = surface.gradient(x)?;
    solve3(&[r.grad_re, r.grad_im, g], &[-r.dt_re, -r.dt_im, 0.0])
        .ok_or_else(|| Error::TrackUnavailable(format!("nodal line tangent to the surface at t={t}")))
}

/// Unit tangent of the nodal line and the normal velocity of the line at `x`.
fn fplane_velocity(spec: &WaveSpec<f64>, x: &Vec3<f64>, t: f64) -> Result<(Vec3<f64>, Vec3<f64>)> {
    let r = reduced_sample(spec, x, t);
    let tangent = normalize(&cross(&r.grad_re, &r.grad_im))
        .ok_or_else(|| Error::TrackUnavailable(format!("degenerate nodal line at t={t}")))?;
    let v = solve3(&[r.grad_re, r.grad_im, tangent], &[-r.dt_re, -r.dt_im, 0.0])
        .ok_or_else(|| Error::TrackUnavailable(format!("singular F-plane system at t={t}")))?;
    Ok((tangent, v))
}

/// Node velocity by central differences of nodes re-solved at `t ± dt_node`,
/// on `surface` if given, otherwise on the F-plane through the node.
pub fn node_velocity(
    spec: &WaveSpec<f64>,
    node: &NodalPoint,
    surface: Option<&IntegralSurface>,
    dt_node: f64,
) -> Result<Vec3<f64>> {
    let unavailable = |e: Error| Error::TrackUnavailable(format!("cannot re-solve node: {e}"));
    let solve = |t: f64| -> Result<Vec3<f64>> {
        match surface {
            Some(s) => node_on_surface(spec, s, t, &node.x, 50).map(|r| r.0),
            None => {
                let r = reduced_sample(spec, &node.x, node.t);
                let n = normalize(&cross(&r.grad_re, &r.grad_im))
                    .ok_or_else(|| Error::TrackUnavailable("degenerate nodal line".into()))?;
                node_on_plane(spec, t, &node.x, &n, 50).map(|r| r.0)
            }
        }
    };
    let p = solve(node.t + dt_node).map_err(unavailable)?;
    let m = solve(node.t - dt_node).map_err(unavailable)?;
    Ok(scale(&sub(&p, &m), 0.5 / dt_node))
}

/// Re-seeds a track that left the cutoff ball along `exit`: from `t_start`
/// on, tries seeds on the opposite ray at several radii and keeps the
/// converged node with the largest norm inside the ball.
fn rescan<S>(exit: &Vec3<f64>, t_start: f64, t1: f64, dt: f64, cutoff: f64, solve: S) -> Option<(f64, Vec3<f64>, usize)>
where
    S: Fn(f64, &Vec3<f64>) -> Result<(Vec3<f64>, usize)>,
{
    let back = scale(&normalize(exit)?, -1.0);
    let radii = [0.9, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002];
    let mut calls = 0;
    let mut t = t_start;
    while t <= t1 {
        let mut best: Option<Vec3<f64>> = None;
        for f in radii {
            if let Ok((x, n)) = solve(t, &scale(&back, f * cutoff)) {
                calls += n;
                let r = norm(&x);
                if r < cutoff && best.is_none_or(|b| r > norm(&b)) {
                    best = Some(x);
                }
            }
        }
        if let Some(x) = best {
            return Some((t, x, calls));
        }
        t += dt;
    }
    None
}

/// Method 1: continue the node along the normal motion of its nodal line.
///
/// Each step predicts with RK4 on the line's normal velocity and corrects by
/// intersecting the nodal line with the plane through the prediction
/// orthogonal to the previous tangent. Output is on the grid `seed.t + k·dt`.
pub fn track_fplane(spec: &WaveSpec<f64>, seed: &NodalPoint, t1: f64, dt: f64) -> Result<NodalTrack> {
    track_fplane_with(spec, seed, t1, dt, &TrackOptions::default())
}

pub fn track_fplane_with(
    spec: &WaveSpec<f64>,
    seed: &NodalPoint,
    t1: f64,
    dt: f64,
    opts: &TrackOptions,
) -> Result<NodalTrack> {
    check_span(seed.t, t1, dt)?;
    let et = |t: f64| opts.eval_time(t);
    let mut track = NodalTrack::empty(NodeMethod::Fplane);
    let mut x = seed.x;
    let mut t = seed.t;
    let mut axis = 2usize;
    let mut reseeded = false;
    let record = |track: &mut NodalTrack, x: Vec3<f64>, t: f64, axis: &mut usize, reseeded: bool| -> Result<()> {
        let (tangent, v) = fplane_velocity(spec, &x, et(t))?;
        if tangent.iter().any(|c| c.abs() > 1e3 * tangent[*axis].abs()) {
            *axis = (0..3).max_by(|&i, &j| tangent[i].abs().total_cmp(&tangent[j].abs())).unwrap();
        }
        track.push(NodalPoint::new(spec, x, et(t), NodeMethod::Fplane), v, reseeded);
        track.points.last_mut().unwrap().t = t;
        track.fplane.push(FPlaneData { tangent, axis: *axis });
        Ok(())
    };
    record(&mut track, x, t, &mut axis, false)?;
    let grid: Vec<f64> = time_grid(seed.t, t1, dt).skip(1).collect();
    let mut gi = 0;
    while gi < grid.len() {
        let target = grid[gi];
        let mut h = target - t;
        let mut blew_up = false;
        while t < target {
            h = h.min(target - t);
            let (tangent, v0) = fplane_velocity(spec, &x, et(t)).map_err(|_| Error::LostTrack { t })?;
            let speed = norm(&v0);
            if speed * h > 0.01 * norm(&x).max(1.0) {
                h = 0.01 * norm(&x).max(1.0) / speed;
            }
            let vel = |p: &Vec3<f64>, s: f64| fplane_velocity(spec, p, et(s)).map(|r| r.1);
            let predicted = (|| -> Result<Vec3<f64>> {
                let k1 = v0;
                let k2 = vel(&add(&x, &scale(&k1, 0.5 * h)), t + 0.5 * h)?;
                let k3 = vel(&add(&x, &scale(&k2, 0.5 * h)), t + 0.5 * h)?;
                let k4 = vel(&add(&x, &scale(&k3, h)), t + h)?;
                let incr = add(&add(&k1, &scale(&k2, 2.0)), &add(&scale(&k3, 2.0), &k4));
                Ok(add(&x, &scale(&incr, h / 6.0)))
            })();
            let corrected = predicted.and_then(|pred| {
                match node_on_plane(spec, et(t + h), &pred, &tangent, opts.max_newton) {
                    Ok((xn, its)) => Ok((pred, xn, its)),
                    Err(_) => {
                        // strongly curved line: the old plane may miss it, use the local tangent
                        let (tp, _) = fplane_velocity(spec, &pred, et(t + h))?;
                        let (xn, its) = node_on_plane(spec, et(t + h), &pred, &tp, opts.max_newton)?;
                        Ok((pred, xn, its))
                    }
                }
            });
            match corrected {
                Ok((pred, xn, its)) if dist(&xn, &pred) <= 10.0 * speed * h + 1e-9 * (1.0 + norm(&x)) => {
                    track.solver_calls += its as u64;
                    let t_new = if target - (t + h) <= 1e-12 * target.abs().max(1.0) { target } else { t + h };
                    if dist(&xn, &x) > opts.cutoff {
                        // passed through infinity within one step and came back on the other side
                        track.blowups.push(BlowupEvent {
                            t_exit: t,
                            exit_point: x,
                            t_resume: t_new,
                            resume_point: xn,
                        });
                        reseeded = true;
                    }
                    t = t_new;
                    x = xn;
                    if norm(&x) > opts.cutoff {
                        blew_up = true;
                        break;
                    }
                    h *= 2.0;
                }
                _ => {
                    h *= 0.5;
                    if h < 1e-12 {
                        return Err(Error::LostTrack { t });
                    }
                }
            }
        }
        if blew_up {
            let exit = x;
            let t_exit = t;
            // resume on the next grid time at which a returning node is found
            let start = grid.iter().position(|&g| g > t_exit).unwrap_or(grid.len());
            let find = |s: f64, g: &Vec3<f64>| {
                nodal_find_with(
                    spec,
                    et(s),
                    g,
                    &FindOptions {
                        max_iter: opts.max_newton,
                        max_travel: opts.cutoff,
                    },
                )
                .map(|p| (p.x, 1))
            };
            let Some(t_first) = grid.get(start).copied() else { break };
            let (t_resume, xr, calls) = rescan(&exit, t_first, t1, dt, opts.cutoff, find).ok_or(Error::LostTrack { t: t_exit })?;
            track.solver_calls += calls as u64;
            track.blowups.push(BlowupEvent {
                t_exit,
                exit_point: exit,
                t_resume,
                resume_point: xr,
            });
            x = xr;
            t = t_resume;
            gi = grid.iter().position(|&g| g >= t_resume - 1e-12).unwrap_or(grid.len());
            reseeded = true;
            record(&mut track, x, t, &mut axis, reseeded)?;
            reseeded = false;
            gi += 1;
            continue;
        }
        record(&mut track, x, t, &mut axis, reseeded)?;
        reseeded = false;
        gi += 1;
    }
    Ok(track)
}

fn require_surface_seed(surface: &IntegralSurface, seed: &NodalPoint) -> Result<()> {
    let res = surface.residual(&seed.x)?;
    if res.abs() > 1e-6 * surface.c_value.abs().max(1.0) {
        return Err(Error::OffSurface { residual: res });
    }
    Ok(())
}

/// Method 2: Newton on the node and surface conditions at each grid time,
/// starting from the previous node.
pub fn track_surface_newton(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    seed: &NodalPoint,
    t1: f64,
    dt: f64,
) -> Result<NodalTrack> {
    track_surface_newton_with(spec, surface, seed, t1, dt, &TrackOptions::default())
}

pub fn track_surface_newton_with(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    seed: &NodalPoint,
    t1: f64,
    dt: f64,
    opts: &TrackOptions,
) -> Result<NodalTrack> {
    check_span(seed.t, t1, dt)?;
    require_surface_seed(surface, seed)?;
    let et = |t: f64| opts.eval_time(t);
    let mut track = NodalTrack::empty(NodeMethod::SurfNewton);
    let (x0, its) = node_on_surface(spec, surface, et(seed.t), &seed.x, opts.max_newton)?;
    track.solver_calls += its as u64;
    let mut x = x0;
    let mut v = surface_node_velocity(spec, surface, &x, et(seed.t))?;
    push_at(&mut track, spec, x, seed.t, et(seed.t), v, false, NodeMethod::SurfNewton);
    let grid: Vec<f64> = time_grid(seed.t, t1, dt).skip(1).collect();
    let mut gi = 0;
    let mut prev_t = seed.t;
    while gi < grid.len() {
        let t = grid[gi];
        let (xn, its) = node_on_surface(spec, surface, et(t), &x, opts.max_newton)?;
        track.solver_calls += its as u64;
        if norm(&xn) > opts.cutoff {
            let solve = |s: f64, g: &Vec3<f64>| node_on_surface(spec, surface, et(s), g, opts.max_newton);
            let (t_resume, xr, calls) = match grid.get(gi + 1) {
                Some(&next) => rescan(&xn, next, t1, dt, opts.cutoff, solve).ok_or(Error::LostTrack { t })?,
                None => break,
            };
            track.solver_calls += calls as u64;
            track.blowups.push(BlowupEvent {
                t_exit: t,
                exit_point: xn,
                t_resume,
                resume_point: xr,
            });
            x = xr;
            v = surface_node_velocity(spec, surface, &x, et(t_resume))?;
            push_at(&mut track, spec, x, t_resume, et(t_resume), v, true, NodeMethod::SurfNewton);
            gi = grid.iter().position(|&g| g > t_resume + 1e-12).unwrap_or(grid.len());
            prev_t = t_resume;
            continue;
        }
        v = surface_node_velocity(spec, surface, &xn, et(t))?;
        let step = t - prev_t;
        if norm(&v) * step > opts.trust_radius {
            track.warnings.push(TrackWarning::LargeVelocity {
                t,
                speed: norm(&v),
                dt: step,
            });
        }
        x = xn;
        push_at(&mut track, spec, x, t, et(t), v, false, NodeMethod::SurfNewton);
        prev_t = t;
        gi += 1;
    }
    Ok(track)
}

#[allow(clippy::too_many_arguments)]
fn push_at(
    track: &mut NodalTrack,
    spec: &WaveSpec<f64>,
    x: Vec3<f64>,
    t: f64,
    t_eval: f64,
    v: Vec3<f64>,
    reseeded: bool,
    method: NodeMethod,
) {
    let mut p = NodalPoint::new(spec, x, t_eval, method);
    p.t = t;
    track.push(p, v, reseeded);
}

/// Tolerances used by [`track_surface_ode`] when none are given.
pub fn default_node_ode_config() -> IntegratorConfig {
    IntegratorConfig {
        abs_tol: 1e-8,
        rel_tol: 1e-8,
        h_init: 1e-3,
        h_min: 1e-12,
        h_max: 0.01,
        max_steps: 10_000_000,
    }
}

/// Method 3: integrate the node velocity implied by the node and surface
/// conditions with RKF45, polishing onto the node by Newton after every step.
pub fn track_surface_ode(spec: &WaveSpec<f64>, surface: &IntegralSurface, seed: &NodalPoint, t1: f64) -> Result<NodalTrack> {
    track_surface_ode_with(spec, surface, seed, t1, &default_node_ode_config(), &TrackOptions::default())
}

pub fn track_surface_ode_with(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    seed: &NodalPoint,
    t1: f64,
    cfg: &IntegratorConfig,
    opts: &TrackOptions,
) -> Result<NodalTrack> {
    if !(t1 > seed.t) {
        return Err(Error::InvalidInput("need t1 > seed time".into()));
    }
    require_surface_seed(surface, seed)?;
    let et = |t: f64| opts.eval_time(t);
    let mut track = NodalTrack::empty(NodeMethod::SurfOde);
    let mut rhs = |t: f64, x: &Vec3<f64>| surface_node_velocity(spec, surface, x, et(t));
    let (x0, its) = node_on_surface(spec, surface, et(seed.t), &seed.x, opts.max_newton)?;
    track.solver_calls += its as u64;
    let mut rk = Rkf45::new(&mut rhs, seed.t, x0, t1, cfg)?;
    push_at(&mut track, spec, x0, seed.t, et(seed.t), rk.dy, false, NodeMethod::SurfOde);
    while rk.t < t1 {
        if rk.accepted >= cfg.max_steps {
            return Err(Error::MaxSteps {
                steps: rk.accepted,
                t: rk.t,
            });
        }
        rk.step(&mut rhs, t1)?;
        let (xp, its) = node_on_surface(spec, surface, et(rk.t), &rk.y, opts.max_newton)?;
        track.solver_calls += its as u64;
        if norm(&xp) > opts.cutoff {
            let solve = |s: f64, g: &Vec3<f64>| node_on_surface(spec, surface, et(s), g, opts.max_newton);
            let step = rk.step_size().max(1e-3);
            let (t_resume, xr, calls) = rescan(&xp, rk.t + step, t1, step, opts.cutoff, solve).ok_or(Error::LostTrack { t: rk.t })?;
            track.solver_calls += calls as u64;
            track.blowups.push(BlowupEvent {
                t_exit: rk.t,
                exit_point: xp,
                t_resume,
                resume_point: xr,
            });
            rk = Rkf45::new(&mut rhs, t_resume, xr, t1, cfg)?;
            push_at(&mut track, spec, xr, t_resume, et(t_resume), rk.dy, true, NodeMethod::SurfOde);
            continue;
        }
        rk.reset_state(&mut rhs, xp)?;
        push_at(&mut track, spec, xp, rk.t, et(rk.t), rk.dy, false, NodeMethod::SurfOde);
    }
    Ok(track)
}

/// Nodes on `surface` at time `t`, found by Newton from a grid of seeds on the
/// surface and deduplicated.
pub fn scan_surface_nodes(spec: &WaveSpec<f64>, surface: &IntegralSurface, t: f64, n_grid: usize) -> Result<Vec<NodalPoint>> {
    let n = n_grid.max(2);
    let mut seeds = Vec::new();
    match surface.family {
        SurfaceFamily::Sphere => {
            let r = surface.c_value.sqrt();
            for i in 0..n {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                for j in 0..2 * n {
                    let ph = std::f64::consts::PI * j as f64 / n as f64;
                    seeds.push([r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]);
                }
            }
        }
        SurfaceFamily::Pear => {
            let (lo, hi) = crate::surfaces::pear_z_range(surface.c_value, surface.omega3)?;
            let phi = PhiFunction::new(surface.omega3)?;
            for i in 0..n {
                let z = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                let rho = (surface.c_value - phi.value(z)).max(0.0).sqrt();
                for j in 0..2 * n {
                    let ph = std::f64::consts::PI * j as f64 / n as f64;
                    seeds.push([rho * ph.cos(), rho * ph.sin(), z]);
                }
            }
        }
        SurfaceFamily::Open => {
            let phi = PhiFunction::new(surface.omega3)?;
            for i in 0..n {
                let z = 0.05 + 3.0 * i as f64 / n as f64;
                for j in 0..n {
                    let x = -3.0 + 6.0 * j as f64 / (n - 1) as f64;
                    let y2 = surface.c_value - phi.value(z) + x * x;
                    if y2 >= 0.0 {
                        for sy in [1.0, -1.0] {
                            for sz in [1.0, -1.0] {
                                seeds.push([x, sy * y2.sqrt(), sz * z]);
                            }
                        }
                    }
                }
            }
        }
        SurfaceFamily::Generic => return Err(Error::Unsupported("node scan on a generic surface".into())),
    }
    let mut found: Vec<NodalPoint> = Vec::new();
    for s in seeds {
        if let Ok((x, _)) = node_on_surface(spec, surface, t, &s, 30) {
            if norm(&x) < 1e3 && found.iter().all(|p| dist(&p.x, &x) > 1e-6 * (1.0 + norm(&x))) {
                found.push(NodalPoint::new(spec, x, t, NodeMethod::Rootfind));
            }
        }
    }
    Ok(found)
}

/// Refines the times at which the track crosses `x[axis] = level`, to `tol`
/// in time, re-solving the node on `surface` at every trial time.
pub fn surface_crossings(
    spec: &WaveSpec<f64>,
    surface: &IntegralSurface,
    track: &NodalTrack,
    axis: usize,
    level: f64,
    tol: f64,
) -> Result<Vec<NodalPoint>> {
    let mut out = Vec::new();
    for i in 1..track.points.len() {
        if track.reseeded[i] {
            continue;
        }
        let (a, b) = (&track.points[i - 1], &track.points[i]);
        let (fa, fb) = (a.x[axis] - level, b.x[axis] - level);
        if fa == 0.0 {
            out.push(*a);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        let node_at = |t: f64| -> Result<Vec3<f64>> {
            let guess = track.interpolate(t)?;
            Ok(node_on_surface(spec, surface, t, &guess, 50)?.0)
        };
        let (mut ta, mut tb, mut ga, mut gb) = (a.t, b.t, fa, fb);
        for _ in 0..200 {
            // secant guarded by bisection
            let mut tm = ta - ga * (tb - ta) / (gb - ga);
            if !(tm > ta && tm < tb) || (tb - ta) > 0.5 * (b.t - a.t) {
                tm = 0.5 * (ta + tb);
            }
            let gm = node_at(tm)?[axis] - level;
            if (gm > 0.0) == (ga > 0.0) {
                ta = tm;
                ga = gm;
            } else {
                tb = tm;
                gb = gm;
            }
            if tb - ta <= tol || gm == 0.0 {
                let t = if gm == 0.0 { tm } else { ta - ga * (tb - ta) / (gb - ga) };
                out.push(NodalPoint::new(spec, node_at(t)?, t, NodeMethod::Rootfind));
                break;
            }
        }
    }
    Ok(out)
}

/// Saddle point of the co-moving flow on an integral surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XPoint {
    pub x: Vec3<f64>,
    pub t: f64,
    /// Eigenvalues of the 2×2 chart Jacobian of the relative flow.
    pub eigvals: [f64; 2],
    pub paired_node: NodalPoint,
    /// Chart coordinates of the X-point.
    pub chart: [f64; 2],
    /// Norm of the relative chart velocity at the returned point.
    pub chart_residual: f64,
}

/// Two-parameter chart of an integral surface used for the co-moving flow.
///
/// The sphere uses `(θ, φ)`; the pear uses `(z, φ)`, which is a
/// reparameterization of the arc-length chart `(s, φ)` (`s` is monotone in
/// `z`), so fixed points and their eigenvalues are the same.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceChart {
    Sphere { radius: f64 },
    Pear { c: f64, phi: PhiFunction },
}

impl SurfaceChart {
    pub fn for_surface(surface: &IntegralSurface) -> Result<Self> {
        match surface.family {
            SurfaceFamily::Sphere => Ok(Self::Sphere {
                radius: surface.c_value.sqrt(),
            }),
            SurfaceFamily::Pear => Ok(Self::Pear {
                c: surface.c_value,
                phi: PhiFunction::new(surface.omega3)?,
            }),
            _ => Err(Error::Unsupported("X-points need a sphere or pear surface".into())),
        }
    }

    pub fn coords(&self, x: &Vec3<f64>) -> Result<[f64; 2]> {
        match self {
            Self::Sphere { .. } => {
                let c = sphere_coords(x)?;
                Ok([c.theta, c.phi])
            }
            Self::Pear { .. } => Ok([x[2], x[1].atan2(x[0])]),
        }
    }

    pub fn point(&self, xi: &[f64; 2]) -> Result<Vec3<f64>> {
        let (sp, cp) = xi[1].sin_cos();
        match self {
            Self::Sphere { radius } => {
                let (st, ct) = xi[0].sin_cos();
                Ok([radius * st * cp, radius * st * sp, radius * ct])
            }
            Self::Pear { c, phi } => {
                let gap = c - phi.value(xi[0]);
                if !(gap >= 0.0) || xi[0] <= 0.0 {
                    return Err(Error::OutOfRange {
                        value: xi[0],
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
                let rho = gap.sqrt();
                Ok([rho * cp, rho * sp, xi[0]])
            }
        }
    }

    /// Chart-coordinate rates of a tangent velocity `v` at `x`.
    pub fn rates(&self, x: &Vec3<f64>, v: &Vec3<f64>) -> Result<[f64; 2]> {
        match self {
            Self::Sphere { radius } => {
                let c = sphere_coords(x)?;
                if c.pole_degenerate {
                    return Err(Error::DomainError("azimuth undefined at the pole".into()));
                }
                let (st, ct) = c.theta.sin_cos();
                let (sp, cp) = c.phi.sin_cos();
                let e_theta = [ct * cp, ct * sp, -st];
                let e_phi = [-sp, cp, 0.0];
                Ok([dot(v, &e_theta) / radius, dot(v, &e_phi) / (radius * st)])
            }
            Self::Pear { .. } => {
                let rho2 = x[0] * x[0] + x[1] * x[1];
                if rho2 < 1e-24 {
                    return Err(Error::DomainError("azimuth undefined on the axis".into()));
                }
                Ok([v[2], (x[0] * v[1] - x[1] * v[0]) / rho2])
            }
        }
    }
}

/// Relative chart velocity of the flow with respect to a moving node.
pub struct ComovingChartFlow<'a> {
    spec: &'a WaveSpec<f64>,
    pub chart: SurfaceChart,
    pub node: NodalPoint,
    pub node_rates: [f64; 2],
}

impl<'a> ComovingChartFlow<'a> {
    pub fn new(spec: &'a WaveSpec<f64>, surface: &IntegralSurface, node: &NodalPoint) -> Result<Self> {
        let chart = SurfaceChart::for_surface(surface)?;
        let nv = node_velocity(spec, node, Some(surface), crate::flow::DEFAULT_NODE_DT)?;
        let node_rates = chart.rates(&node.x, &nv)?;
        Ok(Self {
            spec,
            chart,
            node: *node,
            node_rates,
        })
    }

    pub fn eval(&self, xi: &[f64; 2]) -> Result<[f64; 2]> {
        let x = self.chart.point(xi)?;
        if dist(&x, &self.node.x) < DEFAULT_P_FLOOR {
            return Err(Error::NodeProximity {
                density: 0.0,
                floor: DEFAULT_P_FLOOR,
            });
        }
        let v = velocity(self.spec, &x, self.node.t)?;
        let r = self.chart.rates(&x, &v)?;
        Ok([r[0] - self.node_rates[0], r[1] - self.node_rates[1]])
    }

    pub fn jacobian(&self, xi: &[f64; 2]) -> Result<[[f64; 2]; 2]> {
        let h = 1e-7;
        let mut j = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut p = *xi;
            let mut m = *xi;
            p[k] += h;
            m[k] -= h;
            let (up, um) = (self.eval(&p)?, self.eval(&m)?);
            for i in 0..2 {
                j[i][k] = (up[i] - um[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// Winding number of the relative flow along a chart circle around the node.
    pub fn winding_number(&self, radius: f64, samples: usize) -> Result<i32> {
        let c = self.chart.coords(&self.node.x)?;
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for k in 0..=samples {
            let a = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            let u = self.eval(&[c[0] + radius * a.cos(), c[1] + radius * a.sin()])?;
            let ang = u[1].atan2(u[0]);
            if let Some(p) = prev {
                let mut d = ang - p;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                total += d;
            }
            prev = Some(ang);
        }
        Ok((total / (2.0 * std::f64::consts::PI)).round() as i32)
    }
}

/// Saddle of the co-moving flow near `node`, by Newton from eight chart seeds
/// on a ring of radius 0.1.
pub fn xpoint_find(spec: &WaveSpec<f64>, surface: &IntegralSurface, node: &NodalPoint) -> Result<XPoint> {
    let flow = ComovingChartFlow::new(spec, surface, node)?;
    let c = flow.chart.coords(&node.x)?;
    let mut saddles: Vec<([f64; 2], [f64; 2], f64)> = Vec::new();
    let mut degenerate = None;
    for k in 0..8 {
        let a = std::f64::consts::PI * k as f64 / 4.0;
        let seed = [c[0] + 0.1 * a.cos(), c[1] + 0.1 * a.sin()];
        let Ok(xi) = chart_newton(&flow, seed) else { continue };
        if ((xi[0] - c[0]).powi(2) + (xi[1] - c[1]).powi(2)).sqrt() > 1.0 {
            continue;
        }
        let Ok(j) = flow.jacobian(&xi) else { continue };
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-10 {
            degenerate = Some(det);
            continue;
        }
        if let Ok((l1, l2)) = eig2(&j) {
            if l1 * l2 < 0.0 {
                let d = (xi[0] - c[0]).hypot(xi[1] - c[1]);
                saddles.push((xi, [l1, l2], d));
            }
        }
    }
    let Some((xi, eig, _)) = saddles.into_iter().min_by(|a, b| a.2.total_cmp(&b.2)) else {
        return Err(match degenerate {
            Some(product) => Error::Degenerate { product },
            None => Error::NotFound(format!("no saddle of the co-moving flow near the node at t={}", node.t)),
        });
    };
    let u = flow.eval(&xi)?;
    Ok(XPoint {
        x: flow.chart.point(&xi)?,
        t: node.t,
        eigvals: eig,
        paired_node: *node,
        chart: xi,
        chart_residual: u[0].hypot(u[1]),
    })
}

fn chart_newton(flow: &ComovingChartFlow<'_>, seed: [f64; 2]) -> Result<[f64; 2]> {
    let mut xi = seed;
    for _ in 0..50 {
        let u = flow.eval(&xi)?;
        if u[0].hypot(u[1]) < 1e-12 {
            return Ok(xi);
        }
        let j = flow.jacobian(&xi)?;
        let mut d = solve2(&j, &[-u[0], -u[1]], 1e-300).ok_or(Error::NoConvergence {
            iterations: 0,
            residual: u[0].hypot(u[1]),
        })?;
        let n = d[0].hypot(d[1]);
        if n > 0.05 {
            d = [d[0] * 0.05 / n, d[1] * 0.05 / n];
        }
        xi = [xi[0] + d[0], xi[1] + d[1]];
        if n < 1e-13 {
            return Ok(xi);
        }
    }
    let u = flow.eval(&xi)?;
    if u[0].hypot(u[1]) < 1e-9 {
        return Ok(xi);
    }
    Err(Error::NoConvergence {
        iterations: 50,
        residual: u[0].hypot(u[1]),
    })
}

/// CSV `t,x,y,z,lambda1,lambda2`.
pub fn write_xpoints_csv<W: Write>(mut w: W, points: &[XPoint]) -> std::io::Result<()> {
    writeln!(w, "t,x,y,z,lambda1,lambda2")?;
    for p in points {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.t, p.x[0], p.x[1], p.x[2], p.eigvals[0], p.eigvals[1]
        )?;
    }
    Ok(())
}
