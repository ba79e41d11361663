//! Partial-integrability classification and the conserved functions of the
//! sphere, pear and open families, with intrinsic surface coordinates.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Vec3};
use crate::quadrature::integrate_adaptive;
use crate::scalar::Real;
use crate::wavefunction::WaveSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntegrabilityKind {
    FullyIntegrable,
    Partial,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrabilityClass {
    pub kind: IntegrabilityKind,
    /// Matching conditions, numbered 1 to 6.
    pub matched_cases: Vec<u8>,
}

/// The six pairings of equal quantum numbers. Entry `[axis][k]` names the two
/// triplets (0 = p, 1 = r, 2 = s) whose `axis`-th numbers must agree.
const CONDITIONS: [[(usize, usize); 3]; 6] = [
    [(1, 0), (2, 1), (2, 0)],
    [(1, 0), (2, 0), (2, 1)],
    [(2, 1), (1, 0), (2, 0)],
    [(2, 1), (2, 0), (1, 0)],
    [(2, 0), (1, 0), (2, 1)],
    [(2, 0), (2, 1), (1, 0)],
];

/// Which of the six conditions hold for triplets `(p, r, s)`.
pub fn matched_conditions(triplets: &[[u32; 3]; 3]) -> Vec<u8> {
    CONDITIONS
        .iter()
        .enumerate()
        .filter(|(_, cond)| {
            cond.iter()
                .enumerate()
                .all(|(axis, &(i, j))| triplets[i][axis] == triplets[j][axis])
        })
        .map(|(k, _)| k as u8 + 1)
        .collect()
}

/// Classification from quantum numbers alone.
pub fn classify_quantum_numbers(triplets: &[[u32; 3]; 3]) -> IntegrabilityClass {
    let matched_cases = matched_conditions(triplets);
    let distinct = distinct_count(triplets.iter());
    let kind = if distinct < 3 || matched_cases.len() >= 2 {
        IntegrabilityKind::FullyIntegrable
    } else if matched_cases.len() == 1 {
        IntegrabilityKind::Partial
    } else {
        IntegrabilityKind::None
    };
    IntegrabilityClass { kind, matched_cases }
}

fn distinct_count<'a>(it: impl Iterator<Item = &'a [u32; 3]>) -> usize {
    let mut seen: Vec<&[u32; 3]> = Vec::new();
    for t in it {
        if !seen.contains(&t) {
            seen.push(t);
        }
    }
    seen.len()
}

/// Classification of a superposition. Terms with zero amplitude do not count
/// as present.
pub fn classify_integrability<T: Real>(spec: &WaveSpec<T>) -> IntegrabilityClass {
    let q = spec.quantum_numbers();
    let present = (0..3).filter(|&j| spec.amplitudes[j].norm_sqr() > T::zero()).map(|j| &q[j]);
    if distinct_count(present) < 3 {
        return IntegrabilityClass {
            kind: IntegrabilityKind::FullyIntegrable,
            matched_cases: matched_conditions(&q),
        };
    }
    classify_quantum_numbers(&q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SurfaceFamily {
    Sphere,
    Pear,
    Open,
    Generic,
}

/// `f(x)` for the three named families.
pub fn surface_value<T: Real>(family: SurfaceFamily, x: &Vec3<T>, omega3: T) -> Result<T> {
    let log_term = |z: T| -> Result<T> {
        if z == T::zero() {
            return Err(Error::DomainError("conserved function undefined at z=0".into()));
        }
        Ok(z * z / T::lit(2.0) - z.abs().ln() / (T::lit(2.0) * omega3))
    };
    let [x, y, z] = *x;
    match family {
        SurfaceFamily::Sphere => Ok(x * x + y * y + z * z),
        SurfaceFamily::Pear => Ok(x * x + y * y + log_term(z)?),
        SurfaceFamily::Open => Ok(-x * x + y * y + log_term(z)?),
        SurfaceFamily::Generic => Err(Error::Unsupported("generic surfaces carry their own function".into())),
    }
}

/// `∇f` for the three named families.
pub fn surface_gradient<T: Real>(family: SurfaceFamily, x: &Vec3<T>, omega3: T) -> Result<Vec3<T>> {
    let two = T::lit(2.0);
    let [x, y, z] = *x;
    let dz = |z: T| -> Result<T> {
        if z == T::zero() {
            return Err(Error::DomainError("conserved function undefined at z=0".into()));
        }
        Ok(z - T::one() / (two * omega3 * z))
    };
    match family {
        SurfaceFamily::Sphere => Ok([two * x, two * y, two * z]),
        SurfaceFamily::Pear => Ok([two * x, two * y, dz(z)?]),
        SurfaceFamily::Open => Ok([-two * x, two * y, dz(z)?]),
        SurfaceFamily::Generic => Err(Error::Unsupported("generic surfaces carry their own function".into())),
    }
}

/// User-supplied conserved function returning `(f, ∇f)`.
pub type GenericFunction = Arc<dyn Fn(&Vec3<f64>) -> (f64, Vec3<f64>) + Send + Sync>;

/// A level set `f(x) = C`.
#[derive(Clone)]
pub struct IntegralSurface {
    pub family: SurfaceFamily,
    pub c_value: f64,
    pub omega3: f64,
    generic: Option<GenericFunction>,
}

impl fmt::Debug for IntegralSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegralSurface")
            .field("family", &self.family)
            .field("c_value", &self.c_value)
            .field("omega3", &self.omega3)
            .finish()
    }
}

impl PartialEq for IntegralSurface {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.c_value == other.c_value
            && self.omega3 == other.omega3
            && self.generic.is_none()
            && other.generic.is_none()
    }
}

impl IntegralSurface {
    pub fn new(family: SurfaceFamily, c_value: f64, omega3: f64) -> Result<Self> {
        if !c_value.is_finite() {
            return Err(Error::InvalidInput("surface level must be finite".into()));
        }
        match family {
            SurfaceFamily::Sphere if c_value <= 0.0 => {
                return Err(Error::InvalidInput(format!("sphere needs R² > 0, got {c_value}")));
            }
            SurfaceFamily::Pear | SurfaceFamily::Open if !(omega3 > 0.0) => {
                return Err(Error::InvalidInput("omega3 must be positive".into()));
            }
            SurfaceFamily::Pear => {
                let c0 = PhiFunction::new(omega3)?.c0;
                if c_value <= c0 {
                    return Err(Error::NoSurface { c: c_value, c0 });
                }
            }
            SurfaceFamily::Generic => {
                return Err(Error::InvalidInput("use IntegralSurface::generic".into()));
            }
            _ => {}
        }
        Ok(Self {
            family,
            c_value,
            omega3,
            generic: None,
        })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(SurfaceFamily::Sphere, radius * radius, 0.0)
    }

    /// The level set of `family` passing through `x`.
    pub fn through(family: SurfaceFamily, x: &Vec3<f64>, omega3: f64) -> Result<Self> {
        Self::new(family, surface_value(family, x, omega3)?, omega3)
    }

    pub fn generic(f: GenericFunction, c_value: f64) -> Self {
        Self {
            family: SurfaceFamily::Generic,
            c_value,
            omega3: 0.0,
            generic: Some(f),
        }
    }

    pub fn value(&self, x: &Vec3<f64>) -> Result<f64> {
        match &self.generic {
            Some(f) => Ok(f(x).0),
            None => surface_value(self.family, x, self.omega3),
        }
    }

    pub fn gradient(&self, x: &Vec3<f64>) -> Result<Vec3<f64>> {
        match &self.generic {
            Some(f) => Ok(f(x).1),
            None => surface_gradient(self.family, x, self.omega3),
        }
    }

    /// `f(x) - C`.
    pub fn residual(&self, x: &Vec3<f64>) -> Result<f64> {
        Ok(self.value(x)? - self.c_value)
    }

    /// Length scale used for relative distances: `R` for a sphere, 1 otherwise.
    pub fn length_scale(&self) -> f64 {
        match self.family {
            SurfaceFamily::Sphere => self.c_value.sqrt(),
            _ => 1.0,
        }
    }
}

/// `Φ(z) = z²/2 - ln|z|/(2ω₃)` with its minimizer `z₀` and minimum `C₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiFunction {
    pub omega3: f64,
    pub z0: f64,
    pub c0: f64,
}

impl PhiFunction {
    pub fn new(omega3: f64) -> Result<Self> {
        if !(omega3 > 0.0) || !omega3.is_finite() {
            return Err(Error::InvalidInput(format!("omega3 must be positive, got {omega3}")));
        }
        let z0 = 1.0 / (2.0 * omega3).sqrt();
        let c0 = 0.5 * z0 * z0 - z0.ln() / (2.0 * omega3);
        Ok(Self { omega3, z0, c0 })
    }

    pub fn value(&self, z: f64) -> f64 {
        0.5 * z * z - z.abs().ln() / (2.0 * self.omega3)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        z - 1.0 / (2.0 * self.omega3 * z)
    }
}

pub fn phi_and_extrema(omega3: f64) -> Result<PhiFunction> {
    PhiFunction::new(omega3)
}

/// The two positive roots of `Φ(z) = C`, bracketing `z₀`.
pub fn pear_z_range(c: f64, omega3: f64) -> Result<(f64, f64)> {
    let phi = PhiFunction::new(omega3)?;
    if !(c > phi.c0) {
        return Err(Error::NoSurface { c, c0: phi.c0 });
    }
    let g = |z: f64| phi.value(z) - c;
    // Φ → ∞ at both 0⁺ and ∞
    let mut lo = phi.z0;
    while g(lo) <= 0.0 {
        lo *= 0.5;
    }
    let mut hi = phi.z0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    Ok((bisect(&g, lo, phi.z0), bisect(&g, phi.z0, hi)))
}

/// Root of `g` between `a` and `b` (opposite signs) to 1e-12 in the argument.
fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= 1e-12 * m.abs().max(1.0) * 0.5 {
            return m;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Spherical angles; `phi` is meaningless when `pole_degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCoords {
    pub theta: f64,
    pub phi: f64,
    pub pole_degenerate: bool,
}

pub fn sphere_coords(x: &Vec3<f64>) -> Result<SphereCoords> {
    let r = norm(x);
    if !(r > 0.0) {
        return Err(Error::DomainError("spherical angles undefined at the origin".into()));
    }
    let theta = (x[2] / r).clamp(-1.0, 1.0).acos();
    Ok(SphereCoords {
        theta,
        phi: x[1].atan2(x[0]),
        pole_degenerate: theta.sin() < 1e-12,
    })
}

/// Arc-length chart of the pear surface `x² + y² + Φ(z) = C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearChart {
    pub phi: PhiFunction,
    pub c: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Height that maps to `s = 0`.
    pub z_ref: f64,
}

const ARC_TOL: f64 = 1e-11;

impl PearChart {
    pub fn new(c: f64, omega3: f64, z_ref: f64) -> Result<Self> {
        let phi = PhiFunction::new(omega3)?;
        let (z_min, z_max) = pear_z_range(c, omega3)?;
        if !(z_min..=z_max).contains(&z_ref) {
            return Err(Error::OutOfRange {
                value: z_ref,
                lo: z_min,
                hi: z_max,
            });
        }
        Ok(Self {
            phi,
            c,
            z_min,
            z_max,
            z_ref,
        })
    }

    /// Meridian line element `ds/dz`.
    pub fn ds_dz(&self, z: f64) -> f64 {
        let gap = (self.c - self.phi.value(z)).max(f64::MIN_POSITIVE);
        let d = self.phi.derivative(z);
        (1.0 + d * d / (4.0 * gap)).sqrt()
    }

    /// `2u·ds/dz` at `z_end + d` with `d = ±u²`. The gap `C - Φ` is taken as
    /// `Φ(z_end) - Φ(z_end + d)` via `ln_1p`, which keeps it accurate near the tips.
    fn substituted_element(&self, z_end: f64, d: f64, u: f64) -> f64 {
        if u == 0.0 {
            return self.phi.derivative(z_end).abs().sqrt();
        }
        let dphi = z_end * d + 0.5 * d * d - (d / z_end).ln_1p() / (2.0 * self.phi.omega3);
        let gap_over_u2 = (-dphi / (u * u)).max(f64::MIN_POSITIVE);
        let slope = self.phi.derivative(z_end + d);
        2.0 * (u * u + slope * slope / (4.0 * gap_over_u2)).sqrt()
    }

    /// Arc length from `z_min` along the meridian.
    fn arc_from_min(&self, z: f64) -> Result<f64> {
        let mid = 0.5 * (self.z_min + self.z_max);
        // ζ = z_min + u² below the midpoint, ζ = z_max - u² above it
        let lower = |u: f64| self.substituted_element(self.z_min, u * u, u);
        let upper = |u: f64| self.substituted_element(self.z_max, -u * u, u);
        if z <= mid {
            integrate_adaptive(lower, 0.0, (z - self.z_min).max(0.0).sqrt(), ARC_TOL, ARC_TOL)
        } else {
            let a = integrate_adaptive(lower, 0.0, (mid - self.z_min).sqrt(), ARC_TOL, ARC_TOL)?;
            let b = integrate_adaptive(
                upper,
                (self.z_max - z).max(0.0).sqrt(),
                (self.z_max - mid).sqrt(),
                ARC_TOL,
                ARC_TOL,
            )?;
            Ok(a + b)
        }
    }

    /// Signed arc length from `z_ref` to `z`.
    pub fn arc_length(&self, z: f64) -> Result<f64> {
        if !(self.z_min..=self.z_max).contains(&z) {
            return Err(Error::OutOfRange {
                value: z,
                lo: self.z_min,
                hi: self.z_max,
            });
        }
        Ok(self.arc_from_min(z)? - self.arc_from_min(self.z_ref)?)
    }

    /// Full meridian length from `z_min` to `z_max`.
    pub fn meridian_length(&self) -> Result<f64> {
        self.arc_from_min(self.z_max)
    }

    /// `(s, φ)` of a point on the surface.
    pub fn coords(&self, x: &Vec3<f64>) -> Result<(f64, f64)> {
        self.coords_within(x, 1e-6)
    }

    /// As [`coords`](Self::coords) with a tolerance on `|f(x) − C|`; heights
    /// just past the tips are clamped.
    pub fn coords_within(&self, x: &Vec3<f64>, tol: f64) -> Result<(f64, f64)> {
        let z = self.checked_height(x, tol)?;
        Ok((self.arc_length(z)?, x[1].atan2(x[0])))
    }

    /// `z` of a point within `tol` of the surface, clamped to `[z_min, z_max]`.
    pub fn checked_height(&self, x: &Vec3<f64>, tol: f64) -> Result<f64> {
        let residual = x[0] * x[0] + x[1] * x[1] + self.phi.value(x[2]) - self.c;
        if !(residual.abs() <= tol) {
            return Err(Error::OffSurface { residual });
        }
        Ok(x[2].clamp(self.z_min, self.z_max))
    }

    /// Height with the given arc length, by bisection on the monotone `s(z)`.
    pub fn z_at_arc(&self, s: f64) -> Result<f64> {
        let lo_s = self.arc_length(self.z_min)?;
        let hi_s = self.arc_length(self.z_max)?;
        if !(lo_s..=hi_s).contains(&s) {
            return Err(Error::OutOfRange {
                value: s,
                lo: lo_s,
                hi: hi_s,
            });
        }
        let g = |z: f64| self.arc_length(z).unwrap_or(f64::NAN) - s;
        Ok(bisect(&g, self.z_min, self.z_max))
    }
}

/// `(s, φ)` on the pear surface `C` with `s = 0` at height `z_ref`.
pub fn pear_coords(x: &Vec3<f64>, c: f64, omega3: f64, z_ref: f64) -> Result<(f64, f64)> {
    PearChart::new(c, omega3, z_ref)?.coords(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQ3: f64 = 1.7320508075688772;

    #[test]
    fn named_cases() {
        let k = |q| classify_quantum_numbers(&q).kind;
        assert_eq!(k([[1, 0, 0], [0, 1, 0], [0, 0, 1]]), IntegrabilityKind::Partial);
        assert_eq!(k([[1, 0, 0], [0, 1, 0], [0, 0, 2]]), IntegrabilityKind::Partial);
        assert_eq!(k([[0, 0, 0], [1, 0, 1], [0, 1, 2]]), IntegrabilityKind::None);
        assert_eq!(k([[1, 0, 0], [1, 0, 0], [0, 0, 2]]), IntegrabilityKind::FullyIntegrable);
        assert_eq!(matched_conditions(&[[1, 0, 0], [0, 1, 0], [0, 0, 1]]), vec![4]);
    }

    #[test]
    fn zero_amplitude_counts_as_absent() {
        let spec = WaveSpec::real([1.0, 0.0, 0.0], [[0, 0, 0], [1, 0, 1], [0, 1, 2]], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(classify_integrability(&spec).kind, IntegrabilityKind::FullyIntegrable);
    }

    #[test]
    fn surface_values() {
        assert_eq!(surface_value(SurfaceFamily::Sphere, &[1.0, 0.0, 1.0], 0.0).unwrap(), 2.0);
        let v = surface_value(SurfaceFamily::Open, &[0.0, 0.5f64.sqrt(), 1.0], SQ3).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(matches!(
            surface_value(SurfaceFamily::Pear, &[1.0, 0.0, 0.0], SQ3),
            Err(Error::DomainError(_))
        ));
        let (zmin, _) = pear_z_range(1.0, SQ3).unwrap();
        assert!((surface_value(SurfaceFamily::Pear, &[0.0, 0.0, zmin], SQ3).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_differences() {
        let x = [0.3, -0.8, 0.7];
        for fam in [SurfaceFamily::Sphere, SurfaceFamily::Pear, SurfaceFamily::Open] {
            let g = surface_gradient(fam, &x, SQ3).unwrap();
            for k in 0..3 {
                let mut p = x;
                let mut m = x;
                p[k] += 1e-6;
                m[k] -= 1e-6;
                let fd = (surface_value(fam, &p, SQ3).unwrap() - surface_value(fam, &m, SQ3).unwrap()) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn phi_constants() {
        let p = phi_and_extrema(SQ3).unwrap();
        assert_eq!(format!("{:.4}", p.z0), "0.5373");
        assert_eq!(format!("{:.4}", p.c0), "0.3237");
        assert_eq!(phi_and_extrema(0.5).unwrap().z0, 1.0);
    }

    #[test]
    fn pear_range() {
        let (a, b) = pear_z_range(1.0, SQ3).unwrap();
        let p = PhiFunction::new(SQ3).unwrap();
        assert!((p.value(a) - 1.0).abs() < 1e-10 && (p.value(b) - 1.0).abs() < 1e-10);
        assert!(a < p.z0 && p.z0 < b);
        let (a, b) = pear_z_range(p.c0 + 1e-9, SQ3).unwrap();
        assert!((a - p.z0).abs() < 1e-4 && (b - p.z0).abs() < 1e-4);
        assert!(matches!(pear_z_range(0.3, SQ3), Err(Error::NoSurface { .. })));
        assert!(matches!(
            IntegralSurface::new(SurfaceFamily::Pear, 0.3, SQ3),
            Err(Error::NoSurface { .. })
        ));
    }

    #[test]
    fn sphere_angles() {
        let c = sphere_coords(&[0.0, 0.0, 3.0]).unwrap();
        assert_eq!(c.theta, 0.0);
        assert!(c.pole_degenerate);
        let c = sphere_coords(&[2.0, 0.0, 0.0]).unwrap();
        assert!((c.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-15 && c.phi == 0.0);
        assert!(!c.pole_degenerate);
    }

    #[test]
    fn pear_arc_length() {
        let (zmin, zmax) = pear_z_range(1.0, SQ3).unwrap();
        let chart = PearChart::new(1.0, SQ3, 1.0).unwrap();
        assert_eq!(chart.arc_length(1.0).unwrap(), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=40 {
            let z = zmin + (zmax - zmin) * k as f64 / 40.0;
            let s = chart.arc_length(z).unwrap();
            assert!(s > prev);
            prev = s;
        }
        assert!(chart.arc_length(zmax + 0.1).is_err());
        let z = chart.z_at_arc(0.4).unwrap();
        assert!((chart.arc_length(z).unwrap() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn pear_coords_rejects_off_surface_points() {
        assert!(matches!(
            pear_coords(&[0.5, 0.5, 0.9], 1.0, SQ3, 1.0),
            Err(Error::OffSurface { .. })
        ));
    }
}
