//! Embedded Runge–Kutta–Fehlberg 4(5) integration with dense output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{velocity_and_density, FlowConfig};
use crate::linalg::{dist, Vec3};
use crate::scalar::Real;
use crate::wavefunction::{WaveSpec, WaveSpecConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-7,
            rel_tol: 1e-6,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 1e-1,
            max_steps: 100_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.h_max.is_finite()
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("inconsistent integrator settings {self:?}")))
        }
    }

    /// Both tolerances multiplied by `factor`.
    pub fn scaled_tolerances(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }
}

// Fehlberg's coefficients.
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];

/// Consecutive rejections after which the step is halved unconditionally.
const MAX_CONSECUTIVE_REJECTS: u32 = 20;

/// Stepper state for `y' = f(t, y)` with `y ∈ T^N`.
///
/// The fifth-order solution is propagated (local extrapolation); the
/// difference to the embedded fourth-order solution drives the step size.
#[derive(Debug, Clone)]
pub struct Rkf45<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    /// `f(t, y)` at the current state.
    pub dy: [T; N],
    h: T,
    dir: T,
    atol: T,
    rtol: T,
    h_min: T,
    h_max: T,
    pub accepted: u64,
    pub rejected: u64,
}

impl<T: Real, const N: usize> Rkf45<T, N> {
    pub fn new<F>(f: &mut F, t0: T, y0: [T; N], t1: T, cfg: &IntegratorConfig) -> Result<Self>
    where
        F: FnMut(T, &[T; N]) -> Result<[T; N]>,
    {
        cfg.validate()?;
        let dy = f(t0, &y0)?;
        Ok(Self {
            t: t0,
            y: y0,
            dy,
            h: T::lit(cfg.h_init),
            dir: if t1 >= t0 { T::one() } else { -T::one() },
            atol: T::lit(cfg.abs_tol),
            rtol: T::lit(cfg.rel_tol),
            h_min: T::lit(cfg.h_min),
            h_max: T::lit(cfg.h_max),
            accepted: 0,
            rejected: 0,
        })
    }

    /// Replaces the current state (e.g. after projecting onto a constraint).
    pub fn reset_state<F>(&mut self, f: &mut F, y: [T; N]) -> Result<()>
    where
        F: FnMut(T, &[T; N]) -> Result<[T; N]>,
    {
        self.dy = f(self.t, &y)?;
        self.y = y;
        Ok(())
    }

    /// Current step size magnitude.
    pub fn step_size(&self) -> T {
        self.h
    }

    /// Caps the next step size magnitude.
    pub fn limit_step(&mut self, h: T) {
        self.h = self.h.min(h.max(self.h_min));
    }

    /// Takes one accepted step without passing `t_end`.
    pub fn step<F>(&mut self, f: &mut F, t_end: T) -> Result<()>
    where
        F: FnMut(T, &[T; N]) -> Result<[T; N]>,
    {
        let mut consecutive = 0u32;
        loop {
            let remaining = (t_end - self.t) * self.dir;
            let mut h = self.h.min(self.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let attempt = self.try_step(f, h);
            let (y_new, err) = match attempt {
                Ok(v) => v,
                Err(Error::NodeProximity { .. }) => (self.y, T::infinity()),
                Err(e) => return Err(e),
            };
            if err <= T::one() {
                let t_new = if last { t_end } else { self.t + self.dir * h };
                let dy_new = f(t_new, &y_new)?;
                self.t = t_new;
                self.y = y_new;
                self.dy = dy_new;
                self.accepted += 1;
                let fac = if err > T::zero() {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
                } else {
                    T::lit(5.0)
                };
                // a step shortened to land on t_end says nothing about the next one
                let base = if last { self.h.max(h) } else { h };
                self.h = (base * fac).min(self.h_max).max(self.h_min);
                return Ok(());
            }
            self.rejected += 1;
            consecutive += 1;
            let shrink = if err.is_finite() {
                (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2)).min(T::one())
            } else {
                T::lit(0.25)
            };
            let next = if consecutive >= MAX_CONSECUTIVE_REJECTS {
                h * T::lit(0.5)
            } else {
                h * shrink
            };
            if next < self.h_min {
                return Err(Error::StepUnderflow {
                    t: self.t.as_f64(),
                    h: next.as_f64(),
                    x: first3(&self.y),
                    min_g_seen: f64::NAN,
                });
            }
            self.h = next;
        }
    }

    /// One trial step of size `h`; returns the 5th-order state and the scaled error.
    fn try_step<F>(&self, f: &mut F, h: T) -> Result<([T; N], T)>
    where
        F: FnMut(T, &[T; N]) -> Result<[T; N]>,
    {
        let hs = h * self.dir;
        let mut k = [[T::zero(); N]; 6];
        k[0] = self.dy;
        for s in 1..6 {
            let mut ys = self.y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = T::lit(A[s][j]);
                if a != T::zero() {
                    for i in 0..N {
                        ys[i] += hs * a * kj[i];
                    }
                }
            }
            k[s] = f(self.t + hs * T::lit(C[s]), &ys)?;
        }
        let mut y5 = self.y;
        let mut err = T::zero();
        for i in 0..N {
            let mut d5 = T::zero();
            let mut d4 = T::zero();
            for s in 0..6 {
                d5 += T::lit(B5[s]) * k[s][i];
                d4 += T::lit(B4[s]) * k[s][i];
            }
            y5[i] += hs * d5;
            let tol = self.atol + self.rtol * self.y[i].abs().max(y5[i].abs());
            err = err.max((hs * (d5 - d4)).abs() / tol);
        }
        if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            return Ok((self.y, T::infinity()));
        }
        Ok((y5, err))
    }
}

fn first3<T: Real, const N: usize>(y: &[T; N]) -> [f64; 3] {
    let mut out = [f64::NAN; 3];
    for (o, v) in out.iter_mut().zip(y.iter()) {
        *o = v.as_f64();
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, returning every accepted
/// step as `(t, y, y')`.
pub fn solve_ode<T, const N: usize, F>(
    mut f: F,
    t0: T,
    y0: [T; N],
    t1: T,
    cfg: &IntegratorConfig,
) -> Result<Vec<(T, [T; N], [T; N])>>
where
    T: Real,
    F: FnMut(T, &[T; N]) -> Result<[T; N]>,
{
    let mut rk = Rkf45::new(&mut f, t0, y0, t1, cfg)?;
    let mut out = vec![(t0, y0, rk.dy)];
    while rk.t != t1 {
        if rk.accepted >= cfg.max_steps {
            return Err(Error::MaxSteps {
                steps: rk.accepted,
                t: rk.t.as_f64(),
            });
        }
        rk.step(&mut f, t1)?;
        out.push((rk.t, rk.y, rk.dy));
    }
    Ok(out)
}

/// A particle path: accepted steps with velocities, in increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec3<T>>,
    pub velocities: Vec<Vec3<T>>,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    /// Smallest reduced density `|P|²` met at any evaluation.
    pub min_g_seen: T,
    pub surface_drift: Option<Vec<T>>,
    /// Integration start and end times (`t_end < t_start` for backward runs).
    pub t_start: T,
    pub t_end: T,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at the requested end time of the integration.
    pub fn end_point(&self) -> Vec3<T> {
        if self.t_end >= self.t_start {
            *self.points.last().unwrap()
        } else {
            self.points[0]
        }
    }

    /// Cubic Hermite interpolation between accepted steps.
    pub fn interpolate(&self, t: T) -> Result<Vec3<T>> {
        hermite_interpolate(&self.times, &self.points, &self.velocities, t)
    }

    /// Samples on `t_lo + k·dt`, `k = 0, 1, ...`, up to the last stored time.
    pub fn sample_uniform(&self, dt: T) -> Result<Vec<(T, Vec3<T>)>> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidInput("sample step must be positive".into()));
        }
        let lo = self.times[0];
        let hi = *self.times.last().unwrap();
        let n = ((hi - lo) / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n)
            .map(|k| {
                let t = (lo + T::lit(k as f64) * dt).min(hi);
                Ok((t, self.interpolate(t)?))
            })
            .collect()
    }

    /// CSV with header `t,x,y,z[,drift]`. Rows are the accepted steps, or a
    /// uniform grid when `sample_dt` is given (drift is only written for
    /// accepted steps).
    pub fn write_csv<W: Write>(&self, mut w: W, sample_dt: Option<T>) -> std::io::Result<()> {
        let rows: Vec<(T, Vec3<T>)> = match sample_dt {
            Some(dt) => self.sample_uniform(dt).map_err(std::io::Error::other)?,
            None => self.times.iter().copied().zip(self.points.iter().copied()).collect(),
        };
        let drift = match (&self.surface_drift, sample_dt) {
            (Some(d), None) => Some(d),
            _ => None,
        };
        if drift.is_some() {
            writeln!(w, "t,x,y,z,drift")?;
        } else {
            writeln!(w, "t,x,y,z")?;
        }
        for (i, (t, p)) in rows.iter().enumerate() {
            write!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                t.as_f64(),
                p[0].as_f64(),
                p[1].as_f64(),
                p[2].as_f64()
            )?;
            if let Some(d) = drift {
                write!(w, ",{:.16e}", d[i].as_f64())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn metadata(&self, spec: &WaveSpec<T>, cfg: &IntegratorConfig, error: Option<&Error>) -> TrajectoryMeta {
        TrajectoryMeta {
            spec: spec.to_config(),
            integrator: *cfg,
            t_start: self.t_start.as_f64(),
            t_end: self.t_end.as_f64(),
            steps_accepted: self.steps_accepted,
            steps_rejected: self.steps_rejected,
            min_g_seen: self.min_g_seen.as_f64(),
            error: error.map(|e| e.to_string()),
        }
    }
}

/// JSON sidecar for a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub spec: WaveSpecConfig,
    pub integrator: IntegratorConfig,
    pub t_start: f64,
    pub t_end: f64,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub min_g_seen: f64,
    pub error: Option<String>,
}

/// Cubic Hermite interpolation of samples with known derivatives; `times`
/// must be increasing.
pub fn hermite_interpolate<T: Real>(times: &[T], values: &[Vec3<T>], derivs: &[Vec3<T>], t: T) -> Result<Vec3<T>> {
    let n = times.len();
    if n == 0 || t < times[0] || t > times[n - 1] {
        return Err(Error::SpanMismatch(format!(
            "t={t} outside the stored range"
        )));
    }
    if n == 1 {
        return Ok(values[0]);
    }
    let i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => return Ok(values[i]),
        Err(i) => i - 1,
    };
    let h = times[i + 1] - times[i];
    let s = (t - times[i]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * s3 - three * s2 + T::one();
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    let mut out = [T::zero(); 3];
    for k in 0..3 {
        out[k] = h00 * values[i][k] + h10 * h * derivs[i][k] + h01 * values[i + 1][k] + h11 * h * derivs[i + 1][k];
    }
    Ok(out)
}

/// Integrates a Bohmian trajectory from `(x0, t0)` to `t1` (either direction).
pub fn integrate<T: Real>(spec: &WaveSpec<T>, x0: Vec3<T>, t0: T, t1: T, cfg: &IntegratorConfig) -> Result<Trajectory<T>> {
    let flow_cfg = FlowConfig::<T>::default();
    let mut min_g = T::infinity();
    let mut f = |t: T, x: &Vec3<T>| -> Result<Vec3<T>> {
        let (v, d) = velocity_and_density(spec, x, t, &flow_cfg)?;
        if d < min_g {
            min_g = d;
        }
        Ok(v)
    };
    if t0 == t1 {
        let v = f(t0, &x0)?;
        return Ok(Trajectory {
            times: vec![t0],
            points: vec![x0],
            velocities: vec![v],
            steps_accepted: 0,
            steps_rejected: 0,
            min_g_seen: min_g,
            surface_drift: None,
            t_start: t0,
            t_end: t1,
        });
    }
    let mut rk = Rkf45::new(&mut f, t0, x0, t1, cfg)?;
    let mut times = vec![t0];
    let mut points = vec![x0];
    let mut velocities = vec![rk.dy];
    while rk.t != t1 {
        if rk.accepted >= cfg.max_steps {
            return Err(Error::MaxSteps {
                steps: rk.accepted,
                t: rk.t.as_f64(),
            });
        }
        if let Err(e) = rk.step(&mut f, t1) {
            return Err(match e {
                Error::StepUnderflow { t, h, x, .. } => Error::StepUnderflow {
                    t,
                    h,
                    x,
                    min_g_seen: min_g.as_f64(),
                },
                other => other,
            });
        }
        times.push(rk.t);
        points.push(rk.y);
        velocities.push(rk.dy);
    }
    let (steps_accepted, steps_rejected) = (rk.accepted, rk.rejected);
    if t1 < t0 {
        times.reverse();
        points.reverse();
        velocities.reverse();
    }
    Ok(Trajectory {
        times,
        points,
        velocities,
        steps_accepted,
        steps_rejected,
        min_g_seen: min_g,
        surface_drift: None,
        t_start: t0,
        t_end: t1,
    })
}

/// Distance between `x0` and the point recovered by integrating to `t1` and back.
pub fn retrace_error<T: Real>(spec: &WaveSpec<T>, x0: Vec3<T>, t0: T, t1: T, cfg: &IntegratorConfig) -> Result<T> {
    if t0 == t1 {
        return Ok(T::zero());
    }
    let fwd = integrate(spec, x0, t0, t1, cfg)?;
    let back = integrate(spec, fwd.end_point(), t1, t0, cfg)?;
    Ok(dist(&back.end_point(), &x0))
}

/// One trajectory request in a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRequest<T> {
    pub x0: Vec3<T>,
    pub t0: T,
    pub t1: T,
}

/// Integrates independent requests in parallel; results keep request order.
pub fn integrate_batch<T: Real>(
    spec: &WaveSpec<T>,
    requests: &[TrajectoryRequest<T>],
    cfg: &IntegratorConfig,
) -> Vec<Result<Trajectory<T>>> {
    requests
        .par_iter()
        .map(|r| integrate(spec, r.x0, r.t0, r.t1, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    const W: [f64; 3] = [1.0, std::f64::consts::SQRT_2, 1.7320508075688772];
    const SPHERE: [[u32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

    #[test]
    fn exponential_decay_to_tolerance() {
        let cfg = IntegratorConfig::default();
        let sol = solve_ode(|_t, y: &[f64; 1]| Ok([-y[0]]), 0.0, [1.0], 5.0, &cfg).unwrap();
        let (t, y, _) = sol.last().unwrap();
        assert_eq!(*t, 5.0);
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let cfg = IntegratorConfig::default();
        let sol = solve_ode(|_t, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [1.0, 0.0], -3.0, &cfg).unwrap();
        let (t, y, _) = sol.last().unwrap();
        assert_eq!(*t, -3.0);
        assert!((y[0] - 3f64.cos()).abs() < 1e-6);
        assert!((y[1] - 3f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn fifth_order_convergence_on_fixed_problem() {
        // y' = cos t, y = sin t: error should fall steeply with tolerance
        let run = |tol: f64| {
            let cfg = IntegratorConfig::default().scaled_tolerances(tol / 1e-7);
            let sol = solve_ode(|t, _y: &[f64; 1]| Ok([t.cos()]), 0.0, [0.0], 10.0, &cfg).unwrap();
            (sol.last().unwrap().1[0] - 10f64.sin()).abs()
        };
        assert!(run(1e-10) < run(1e-6));
        assert!(run(1e-10) < 1e-8);
    }

    #[test]
    fn stationary_state_stays_put() {
        let spec = WaveSpec::real([1.0, 0.0, 0.0], SPHERE, W).unwrap();
        let x0 = [0.7, 0.2, -0.4];
        let tr = integrate(&spec, x0, 0.0, 10.0, &IntegratorConfig::default()).unwrap();
        assert!(tr.points.iter().all(|p| *p == x0));
    }

    #[test]
    fn sphere_radius_is_conserved() {
        let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap();
        let tr = integrate(&spec, [1.0, 0.0, 1.0], 0.0, 20.0, &IntegratorConfig::default()).unwrap();
        for p in &tr.points {
            assert!((norm(p) - 2f64.sqrt()).abs() < 1e-5);
        }
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tr.times.len(), tr.points.len());
    }

    #[test]
    fn backward_run_is_stored_in_increasing_time() {
        let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap();
        let tr = integrate(&spec, [1.0, 0.0, 1.0], 5.0, 0.0, &IntegratorConfig::default()).unwrap();
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(tr.points[tr.len() - 1], [1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_span_retrace_is_zero() {
        let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap();
        assert_eq!(retrace_error(&spec, [1.0, 0.0, 1.0], 3.0, 3.0, &IntegratorConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn hermite_interpolation_is_exact_for_cubics() {
        let f = |t: f64| [t * t * t - t, 2.0 * t * t, 1.0];
        let df = |t: f64| [3.0 * t * t - 1.0, 4.0 * t, 0.0];
        let times = vec![0.0, 0.7, 1.5];
        let vals: Vec<_> = times.iter().map(|&t| f(t)).collect();
        let ders: Vec<_> = times.iter().map(|&t| df(t)).collect();
        for &t in &[0.1, 0.69, 1.0, 1.5] {
            let p = hermite_interpolate(&times, &vals, &ders, t).unwrap();
            for k in 0..3 {
                assert!((p[k] - f(t)[k]).abs() < 1e-13);
            }
        }
        assert!(hermite_interpolate(&times, &vals, &ders, 1.6).is_err());
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let cfg = IntegratorConfig {
            h_min: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap();
        let tr = integrate(&spec, [1.0, 0.0, 1.0], 0.0, 1.0, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(0.25)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y,z");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0");
    }

    #[test]
    fn batch_matches_serial() {
        let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap();
        let cfg = IntegratorConfig::default();
        let reqs: Vec<_> = (0..4)
            .map(|k| TrajectoryRequest {
                x0: [1.0, 0.1 * k as f64, 1.0],
                t0: 0.0,
                t1: 5.0,
            })
            .collect();
        let batch = integrate_batch(&spec, &reqs, &cfg);
        for (r, b) in reqs.iter().zip(batch) {
            assert_eq!(b.unwrap(), integrate(&spec, r.x0, r.t0, r.t1, &cfg).unwrap());
        }
    }

    #[test]
    fn single_precision_trajectory() {
        let spec: WaveSpec<f32> = WaveSpec::with_small_amplitudes(0.1f32, 0.1, SPHERE, [1.0, 2f32.sqrt(), 3f32.sqrt()]).unwrap();
        let cfg = IntegratorConfig {
            abs_tol: 1e-5,
            rel_tol: 1e-5,
            ..Default::default()
        };
        let tr = integrate(&spec, [1.0f32, 0.0, 1.0], 0.0, 10.0, &cfg).unwrap();
        let r = norm(&tr.end_point());
        assert!((r - 2f32.sqrt()).abs() < 1e-3);
    }
}
