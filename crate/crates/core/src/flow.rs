//! Bohmian velocity field `v = Im(∇Ψ/Ψ)` (m = ħ = 1).

use crate::error::{Error, Result};
use crate::linalg::{norm, sub, Vec3};
use crate::nodal::{node_velocity, NodalPoint};
use crate::scalar::Real;
use crate::surfaces::IntegralSurface;
use crate::wavefunction::{reduced_sample, WaveSpec};

/// Node-proximity threshold.
///
/// The test is applied to the reduced density `|P|²` (Ψ with the shared
/// Gaussian envelope divided out), so points far from the origin where Ψ
/// itself underflows remain usable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig<T> {
    pub g_floor: T,
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        Self { g_floor: T::lit(1e-30) }
    }
}

pub type Velocity<T> = Vec3<T>;

pub fn velocity<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T) -> Result<Velocity<T>> {
    velocity_with(spec, x, t, &FlowConfig::default())
}

pub fn velocity_with<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T, cfg: &FlowConfig<T>) -> Result<Velocity<T>> {
    Ok(velocity_and_density(spec, x, t, cfg)?.0)
}

/// Velocity together with the reduced density at `x`.
pub fn velocity_and_density<T: Real>(
    spec: &WaveSpec<T>,
    x: &Vec3<T>,
    t: T,
    cfg: &FlowConfig<T>,
) -> Result<(Velocity<T>, T)> {
    let r = reduced_sample(spec, x, t);
    let d = r.density();
    if !(d > cfg.g_floor) {
        return Err(Error::NodeProximity {
            density: d.as_f64(),
            floor: cfg.g_floor.as_f64(),
        });
    }
    let mut v = [T::zero(); 3];
    for i in 0..3 {
        v[i] = (r.p_re * r.grad_im[i] - r.p_im * r.grad_re[i]) / d;
    }
    Ok((v, d))
}

/// `∂v_i/∂x_j` by central differences.
pub fn jacobian<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T) -> Result<[[T; 3]; 3]> {
    let base = T::lit(1e-6).max(T::epsilon().cbrt() * T::lit(0.1));
    let h = base.max(base * norm(x));
    let mut jac = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let vp = velocity(spec, &xp, t)?;
        let vm = velocity(spec, &xm, t)?;
        for i in 0..3 {
            jac[i][j] = (vp[i] - vm[i]) / (h + h);
        }
    }
    Ok(jac)
}

/// Default time step for the finite-difference node velocity.
pub const DEFAULT_NODE_DT: f64 = 1e-4;
/// Offsets shorter than this are rejected as coinciding with the node.
pub const DEFAULT_P_FLOOR: f64 = 1e-8;

/// Flow seen from a frame moving with a nodal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComovingFlow {
    pub origin: Vec3<f64>,
    pub u: Vec3<f64>,
    pub frame_velocity: Vec3<f64>,
}

/// Relative velocity `v(N + p) - dN/dt`.
///
/// The node velocity is a central difference of nodes re-solved at
/// `t ± DEFAULT_NODE_DT`, along the nodal line's normal motion.
pub fn comoving_velocity(spec: &WaveSpec<f64>, nodal: &NodalPoint, p: &Vec3<f64>, t: f64) -> Result<ComovingFlow> {
    let frame_velocity = node_velocity(spec, nodal, None, DEFAULT_NODE_DT)?;
    comoving_velocity_in_frame(spec, nodal, &frame_velocity, p, t)
}

/// As [`comoving_velocity`], with the node constrained to an integral surface.
pub fn comoving_velocity_on_surface(
    spec: &WaveSpec<f64>,
    nodal: &NodalPoint,
    surface: &IntegralSurface,
    p: &Vec3<f64>,
    t: f64,
) -> Result<ComovingFlow> {
    let frame_velocity = node_velocity(spec, nodal, Some(surface), DEFAULT_NODE_DT)?;
    comoving_velocity_in_frame(spec, nodal, &frame_velocity, p, t)
}

/// Relative velocity for an already known frame velocity.
pub fn comoving_velocity_in_frame(
    spec: &WaveSpec<f64>,
    nodal: &NodalPoint,
    frame_velocity: &Vec3<f64>,
    p: &Vec3<f64>,
    t: f64,
) -> Result<ComovingFlow> {
    if norm(p) < DEFAULT_P_FLOOR {
        return Err(Error::NodeProximity {
            density: 0.0,
            floor: DEFAULT_P_FLOOR,
        });
    }
    let x = [nodal.x[0] + p[0], nodal.x[1] + p[1], nodal.x[2] + p[2]];
    let v = velocity(spec, &x, t)?;
    Ok(ComovingFlow {
        origin: nodal.x,
        u: sub(&v, frame_velocity),
        frame_velocity: *frame_velocity,
    })
}
