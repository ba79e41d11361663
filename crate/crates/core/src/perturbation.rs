//! Perturbation series for orbits in powers of the small amplitudes `b`, `c`.
//!
//! With the dominant term factored out, the reduced wavefunction is
//! `a φ_a (1 + ε)`, `ε = Σ_k s_k g_k(x) e^{-iθ_k t}`, where `s = (b, c)`,
//! `g_k = φ_k / (a φ_a)` and `θ_k = E_k − E_a`. The velocity `Im ∇ln Ψ` then
//! expands as `Im ∇ε − Im(ε ∇ε) + O(3)`, which is all that orders 1 and 2 need.
//! Every frequency is an integer combination `m θ₁ + n θ₂`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eigenbasis::Mode3D;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::linalg::{dot, sub, Vec3};
use crate::wavefunction::WaveSpec;

/// Frequencies below this are treated as resonant.
pub const SMALL_DIVISOR: f64 = 1e-9;
/// Minimum `|a φ_a|` at the base point.
pub const MIN_DOMINANT: f64 = 1e-6;
/// Determinant floor for eliminating the cosine variables.
pub const ELIMINATION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrigKind {
    /// Constant; only the order-0 base coordinate.
    Const,
    /// `cos(νt) − 1`, so that the term vanishes at t=0.
    Cos,
    /// `sin(νt)`.
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    /// Coefficient without the `b^p c^q` factor.
    pub coeff: f64,
    pub b_pow: u32,
    pub c_pow: u32,
    /// Integer combination `(m, n)` of the two base frequencies.
    pub harmonics: [i32; 2],
    /// `m θ₁ + n θ₂`.
    pub freq: f64,
    pub kind: TrigKind,
}

impl TrigTerm {
    pub fn order(&self) -> u32 {
        self.b_pow + self.c_pow
    }

    fn trig(&self, t: f64) -> f64 {
        match self.kind {
            TrigKind::Const => 1.0,
            TrigKind::Cos => (self.freq * t).cos() - 1.0,
            TrigKind::Sin => (self.freq * t).sin(),
        }
    }

    pub fn value(&self, b: f64, c: f64, t: f64) -> f64 {
        self.coeff * b.powi(self.b_pow as i32) * c.powi(self.c_pow as i32) * self.trig(t)
    }
}

/// Per-coordinate trigonometric series anchored at `base` for t=0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub base: Vec3<f64>,
    /// `θ₁ = E_b − E_a`, `θ₂ = E_c − E_a`.
    pub frequencies: [f64; 2],
    pub b: f64,
    pub c: f64,
    pub order: u32,
    pub components: [Vec<TrigTerm>; 3],
}

impl TrigSeries {
    fn new(base: Vec3<f64>, frequencies: [f64; 2], b: f64, c: f64) -> Self {
        let components = std::array::from_fn(|i| {
            vec![TrigTerm {
                coeff: base[i],
                b_pow: 0,
                c_pow: 0,
                harmonics: [0, 0],
                freq: 0.0,
                kind: TrigKind::Const,
            }]
        });
        Self {
            base,
            frequencies,
            b,
            c,
            order: 0,
            components,
        }
    }

    pub fn freq_of(&self, h: [i32; 2]) -> f64 {
        h[0] as f64 * self.frequencies[0] + h[1] as f64 * self.frequencies[1]
    }

    fn push(&mut self, axis: usize, coeff: f64, b_pow: u32, c_pow: u32, harmonics: [i32; 2], kind: TrigKind) {
        let freq = self.freq_of(harmonics);
        self.components[axis].push(TrigTerm {
            coeff,
            b_pow,
            c_pow,
            harmonics,
            freq,
            kind,
        });
    }

    pub fn evaluate(&self, t: f64) -> Vec3<f64> {
        self.evaluate_to(t, self.order)
    }

    /// Partial sum up to total `(b, c)` degree `order`.
    pub fn evaluate_to(&self, t: f64, order: u32) -> Vec3<f64> {
        std::array::from_fn(|i| {
            self.components[i]
                .iter()
                .filter(|term| term.order() <= order)
                .map(|term| term.value(self.b, self.c, t))
                .sum()
        })
    }

    /// Same series truncated at `order`.
    pub fn truncated(&self, order: u32) -> Self {
        let mut s = self.clone();
        for comp in &mut s.components {
            comp.retain(|term| term.order() <= order);
        }
        s.order = order.min(self.order);
        s
    }

    /// Merges equal terms and fixes the sign convention: the first nonzero
    /// harmonic is positive. Zero coefficients are dropped.
    pub fn canonicalize(&mut self) {
        for comp in &mut self.components {
            let mut merged: Vec<TrigTerm> = Vec::new();
            for mut term in comp.drain(..) {
                let first = if term.harmonics[0] != 0 { term.harmonics[0] } else { term.harmonics[1] };
                if first < 0 {
                    term.harmonics = [-term.harmonics[0], -term.harmonics[1]];
                    term.freq = -term.freq;
                    if term.kind == TrigKind::Sin {
                        term.coeff = -term.coeff;
                    }
                }
                match merged.iter_mut().find(|m| {
                    m.kind == term.kind && m.harmonics == term.harmonics && m.b_pow == term.b_pow && m.c_pow == term.c_pow
                }) {
                    Some(m) => m.coeff += term.coeff,
                    None => merged.push(term),
                }
            }
            merged.retain(|m| m.coeff != 0.0 || m.kind == TrigKind::Const);
            merged.sort_by_key(|m| (m.order(), m.b_pow, m.kind as u8, m.harmonics));
            *comp = merged;
        }
    }

    /// Coefficient of a term, 0 if absent. The series should be canonical.
    pub fn coefficient(&self, axis: usize, b_pow: u32, c_pow: u32, harmonics: [i32; 2], kind: TrigKind) -> f64 {
        self.components[axis]
            .iter()
            .filter(|m| m.kind == kind && m.harmonics == harmonics && m.b_pow == b_pow && m.c_pow == c_pow)
            .map(|m| m.coeff)
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("series dump: {e}")))
    }
}

fn check_divisor(what: &str, value: f64) -> Result<()> {
    if value.abs() < SMALL_DIVISOR {
        return Err(Error::SmallDivisor {
            what: what.into(),
            value,
        });
    }
    Ok(())
}

/// First-order solution on the sphere for modes 100/010/001, written out
/// term by term from the closed-form expressions.
pub fn order1_sphere(spec: &WaveSpec<f64>, base: Vec3<f64>) -> Result<TrigSeries> {
    if spec.quantum_numbers() != [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
        return Err(Error::InvalidInput("sphere series needs modes 100/010/001".into()));
    }
    let [a, b, c] = real_amplitudes(spec)?;
    let [w1, w2, w3] = spec.omegas;
    let (w12, w13) = (w1 - w2, w1 - w3);
    let [x0, y0, z0] = base;
    if x0.abs() < MIN_DOMINANT {
        return Err(Error::SmallDivisor {
            what: "x0".into(),
            value: x0,
        });
    }
    check_divisor("omega12", w12)?;
    check_divisor("omega13", w13)?;
    let q1 = a * a * w1;
    let ab = (w1 * w2).sqrt() * a;
    let ac = (w1 * w3).sqrt() * a;
    let thetas = spec.energies();
    let mut s = TrigSeries::new(base, [thetas[1] - thetas[0], thetas[2] - thetas[0]], b, c);
    // cos(ω₁₂t) = cos(θ₁t) and cos(ω₁₃t) = cos(θ₂t)
    s.push(0, ab * y0 / (w12 * q1 * x0 * x0), 1, 0, [1, 0], TrigKind::Cos);
    s.push(0, ac * z0 / (w13 * q1 * x0 * x0), 0, 1, [0, 1], TrigKind::Cos);
    s.push(1, -ab / (q1 * x0 * w12), 1, 0, [1, 0], TrigKind::Cos);
    s.push(2, -ac / (q1 * x0 * w13), 0, 1, [0, 1], TrigKind::Cos);
    s.order = 1;
    s.canonicalize();
    Ok(s)
}

/// First-order solution for modes 000/101/012, written out from the closed form.
pub fn order1_nonintegrable(spec: &WaveSpec<f64>, base: Vec3<f64>) -> Result<TrigSeries> {
    if spec.quantum_numbers() != [[0, 0, 0], [1, 0, 1], [0, 1, 2]] {
        return Err(Error::InvalidInput("non-integrable series needs modes 000/101/012".into()));
    }
    let [a, b, c] = real_amplitudes(spec)?;
    if a.abs() < MIN_DOMINANT {
        return Err(Error::SmallDivisor {
            what: "a".into(),
            value: a,
        });
    }
    let [w1, w2, w3] = spec.omegas;
    let (n1, n2) = (w1 + w3, w2 + 2.0 * w3);
    check_divisor("omega1+omega3", n1)?;
    check_divisor("omega2+2omega3", n2)?;
    let [x0, y0, z0] = base;
    let mut s = TrigSeries::new(base, [n1, n2], b, c);
    let r13 = (w1 * w3).sqrt();
    s.push(0, 2.0 * r13 * z0 / (a * n1), 1, 0, [1, 0], TrigKind::Cos);
    s.push(1, 2.0 * w2.sqrt() * (z0 * z0 * w3 - 0.5) / (n2 * a), 0, 1, [0, 1], TrigKind::Cos);
    s.push(2, 2.0 * r13 * x0 / (a * n1), 1, 0, [1, 0], TrigKind::Cos);
    s.push(2, 4.0 * z0 * w3 * w2.sqrt() * y0 / (n2 * a), 0, 1, [0, 1], TrigKind::Cos);
    s.order = 1;
    s.canonicalize();
    Ok(s)
}

fn real_amplitudes(spec: &WaveSpec<f64>) -> Result<[f64; 3]> {
    if !spec.has_real_amplitudes() {
        return Err(Error::Unsupported("perturbation series need real amplitudes".into()));
    }
    Ok(std::array::from_fn(|k| spec.amplitudes[k].re))
}

/// A plain (not anchored) trig term: `Cos` is `cos(νt)`, with `[0, 0]` the constant.
#[derive(Debug, Clone, Copy)]
struct Wave {
    coeff: f64,
    b_pow: u32,
    c_pow: u32,
    h: [i32; 2],
    sine: bool,
}

fn hadd(a: [i32; 2], b: [i32; 2]) -> [i32; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn hsub(a: [i32; 2], b: [i32; 2]) -> [i32; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Product-to-sum.
fn multiply(p: &Wave, q: &Wave) -> [Wave; 2] {
    let half = 0.5 * p.coeff * q.coeff;
    let mk = |coeff: f64, h: [i32; 2], sine: bool| Wave {
        coeff,
        b_pow: p.b_pow + q.b_pow,
        c_pow: p.c_pow + q.c_pow,
        h,
        sine,
    };
    match (p.sine, q.sine) {
        (false, false) => [mk(half, hsub(p.h, q.h), false), mk(half, hadd(p.h, q.h), false)],
        (true, false) => [mk(half, hadd(p.h, q.h), true), mk(half, hsub(p.h, q.h), true)],
        (false, true) => [mk(half, hadd(q.h, p.h), true), mk(half, hsub(q.h, p.h), true)],
        (true, true) => [mk(half, hsub(p.h, q.h), false), mk(-half, hadd(p.h, q.h), false)],
    }
}

/// Anchored series terms as plain waves: `cos − 1` splits into two.
fn as_waves(term: &TrigTerm) -> Vec<Wave> {
    let w = |coeff, h, sine| Wave {
        coeff,
        b_pow: term.b_pow,
        c_pow: term.c_pow,
        h,
        sine,
    };
    match term.kind {
        TrigKind::Const => vec![w(term.coeff, [0, 0], false)],
        TrigKind::Cos => vec![w(term.coeff, term.harmonics, false), w(-term.coeff, [0, 0], false)],
        TrigKind::Sin => vec![w(term.coeff, term.harmonics, true)],
    }
}

/// Integrates `∫₀ᵗ wave dτ` into anchored terms of `series` on `axis`.
fn integrate_wave(series: &mut TrigSeries, axis: usize, w: &Wave) -> Result<()> {
    let nu = series.freq_of(w.h);
    if w.sine {
        if w.h == [0, 0] {
            return Ok(());
        }
        check_divisor(&format!("frequency {:?}", w.h), nu)?;
        series.push(axis, -w.coeff / nu, w.b_pow, w.c_pow, w.h, TrigKind::Cos);
    } else {
        if w.h == [0, 0] {
            return Err(Error::SecularTerm { harmonics: w.h });
        }
        check_divisor(&format!("frequency {:?}", w.h), nu)?;
        series.push(axis, w.coeff / nu, w.b_pow, w.c_pow, w.h, TrigKind::Sin);
    }
    Ok(())
}

/// Value, gradient and Hessian of a reduced 3-D mode.
fn mode_jet(mode: &Mode3D<f64>, x: &Vec3<f64>) -> (f64, Vec3<f64>, [[f64; 3]; 3]) {
    let f: [(f64, f64, f64); 3] = std::array::from_fn(|i| mode.modes[i].reduced2(x[i]));
    let v = [f[0].0, f[1].0, f[2].0];
    let d = [f[0].1, f[1].1, f[2].1];
    let dd = [f[0].2, f[1].2, f[2].2];
    let value = v[0] * v[1] * v[2];
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        grad[i] = d[i] * v[j] * v[k];
        hess[i][i] = dd[i] * v[j] * v[k];
        hess[i][j] = d[i] * d[j] * v[k];
        hess[j][i] = hess[i][j];
    }
    (value, grad, hess)
}

/// `g = u / w` with its gradient and Hessian by the quotient rule.
fn ratio_jet(
    u: (f64, Vec3<f64>, [[f64; 3]; 3]),
    w: (f64, Vec3<f64>, [[f64; 3]; 3]),
) -> (f64, Vec3<f64>, [[f64; 3]; 3]) {
    let g = u.0 / w.0;
    let grad: Vec3<f64> = std::array::from_fn(|i| (u.1[i] - g * w.1[i]) / w.0);
    let hess = std::array::from_fn(|i| {
        std::array::from_fn(|j| (u.2[i][j] - grad[i] * w.1[j] - w.1[i] * grad[j] - g * w.2[i][j]) / w.0)
    });
    (g, grad, hess)
}

/// Series solution through `base` at t=0 to total degree `order` (1 or 2) in `b`, `c`.
///
/// Order k substitutes the order k−1 solution into the velocity expanded to
/// degree k, reduces products to sums and integrates term by term.
pub fn iterate_order(spec: &WaveSpec<f64>, base: Vec3<f64>, order: u32) -> Result<TrigSeries> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidInput(format!("series order must be 1 or 2, got {order}")));
    }
    let [a, b, c] = real_amplitudes(spec)?;
    let dominant = mode_jet(&spec.modes[0], &base);
    let w = (a * dominant.0, dominant.1.map(|v| a * v), dominant.2.map(|r| r.map(|v| a * v)));
    if w.0.abs() < MIN_DOMINANT {
        return Err(Error::SmallDivisor {
            what: "a*phi_a(base)".into(),
            value: w.0,
        });
    }
    let jets = [ratio_jet(mode_jet(&spec.modes[1], &base), w), ratio_jet(mode_jet(&spec.modes[2], &base), w)];
    let e = spec.energies();
    let mut series = TrigSeries::new(base, [e[1] - e[0], e[2] - e[0]], b, c);
    let unit = [[1, 0], [0, 1]];
    let pows = [(1u32, 0u32), (0, 1)];

    // order 1: ẋ = −Σ s_k ∇g_k sin(θ_k t)
    for axis in 0..3 {
        for k in 0..2 {
            let wave = Wave {
                coeff: -jets[k].1[axis],
                b_pow: pows[k].0,
                c_pow: pows[k].1,
                h: unit[k],
                sine: true,
            };
            integrate_wave(&mut series, axis, &wave)?;
        }
    }
    series.order = 1;
    if order == 1 {
        series.canonicalize();
        return Ok(series);
    }

    // order 2: ẋ₂ = Σ s_k s_l g_k ∇g_l sin((θ_k+θ_l)t) + (∂v₁/∂x)·x₁
    let first: [Vec<TrigTerm>; 3] = std::array::from_fn(|i| {
        series.components[i].iter().filter(|term| term.order() == 1).copied().collect()
    });
    for axis in 0..3 {
        let mut rhs: Vec<Wave> = Vec::new();
        for k in 0..2 {
            for l in 0..2 {
                rhs.push(Wave {
                    coeff: jets[k].0 * jets[l].1[axis],
                    b_pow: pows[k].0 + pows[l].0,
                    c_pow: pows[k].1 + pows[l].1,
                    h: hadd(unit[k], unit[l]),
                    sine: true,
                });
            }
        }
        for j in 0..3 {
            for k in 0..2 {
                let dv = Wave {
                    coeff: -jets[k].2[axis][j],
                    b_pow: pows[k].0,
                    c_pow: pows[k].1,
                    h: unit[k],
                    sine: true,
                };
                for term in &first[j] {
                    for part in as_waves(term) {
                        rhs.extend(multiply(&dv, &part));
                    }
                }
            }
        }
        for wave in &rhs {
            integrate_wave(&mut series, axis, wave)?;
        }
    }
    series.order = 2;
    series.canonicalize();
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntegralKind {
    TimeDependent,
    TimeIndependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IntegralRelation {
    /// `normal · (x − point) = 0`, with `normal = (p, q, −1)` from `z = z(x, y)`.
    Plane { point: Vec3<f64>, normal: Vec3<f64> },
    /// `z = z(x, y)` from the order-2 series, one sheet per phase solution of the `x`, `y` equations.
    Sheets { series: TrigSeries },
    /// `x_axis − (series_axis(t) − base_axis)`, which stays at the base coordinate.
    Coordinate { axis: usize, series: TrigSeries },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormalIntegral {
    pub kind: IntegralKind,
    pub order: u32,
    pub relation: IntegralRelation,
}

/// Time-independent formal integral `z = z(x, y)` of a series.
///
/// At order 1 the two cosine variables are eliminated from the `x`, `y`
/// components and substituted into `z`, giving a plane. At order 2 the
/// elimination is done numerically point by point and the relation is
/// multivalued (see [`FormalIntegral::z_of`]).
pub fn formal_integral_surface(series: &TrigSeries) -> Result<FormalIntegral> {
    let plane = first_order_plane(series)?;
    match series.order {
        0 | 1 => Ok(FormalIntegral {
            kind: IntegralKind::TimeIndependent,
            order: 1,
            relation: plane,
        }),
        2 => {
            if series.components.iter().flatten().any(|m| m.kind == TrigKind::Sin) {
                return Err(Error::Unsupported("sine terms in the series cannot be eliminated".into()));
            }
            if series.components.iter().flatten().any(|m| m.harmonics.iter().any(|h| h.abs() > 2)) {
                return Err(Error::Unsupported("harmonics above 2 in the series".into()));
            }
            Ok(FormalIntegral {
                kind: IntegralKind::TimeIndependent,
                order: 2,
                relation: IntegralRelation::Sheets { series: series.clone() },
            })
        }
        n => Err(Error::InvalidInput(format!("order {n} not supported"))),
    }
}

/// The two time-dependent formal integrals `x − x₁(t) − x₂(t) = x₀` (and y).
pub fn formal_integrals_time_dependent(series: &TrigSeries) -> [FormalIntegral; 2] {
    std::array::from_fn(|axis| FormalIntegral {
        kind: IntegralKind::TimeDependent,
        order: series.order,
        relation: IntegralRelation::Coordinate {
            axis,
            series: series.clone(),
        },
    })
}

/// `Δx = M u` with `u_k = cos(θ_k t) − 1` for the first-order part.
fn first_order_matrix(series: &TrigSeries) -> [[f64; 2]; 3] {
    std::array::from_fn(|axis| {
        let mut row = [0.0; 2];
        for term in series.components[axis].iter().filter(|m| m.order() == 1) {
            let s = series.b.powi(term.b_pow as i32) * series.c.powi(term.c_pow as i32);
            match (term.kind, term.harmonics) {
                (TrigKind::Cos, [1, 0]) => row[0] += term.coeff * s,
                (TrigKind::Cos, [0, 1]) => row[1] += term.coeff * s,
                _ => {}
            }
        }
        row
    })
}

fn first_order_plane(series: &TrigSeries) -> Result<IntegralRelation> {
    let m = first_order_matrix(series);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < ELIMINATION_FLOOR {
        return Err(Error::EliminationFailed { det });
    }
    // u = M_xy⁻¹ (Δx, Δy), Δz = M_z u
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let p = m[2][0] * inv[0][0] + m[2][1] * inv[1][0];
    let q = m[2][0] * inv[0][1] + m[2][1] * inv[1][1];
    Ok(IntegralRelation::Plane {
        point: series.base,
        normal: [p, q, -1.0],
    })
}

/// Component `axis` of an all-cosine series at phases `A = θ₁t`, `B = θ₂t`,
/// with its derivatives in `A` and `B`.
fn component_at_phases(series: &TrigSeries, axis: usize, a: f64, b: f64) -> (f64, f64, f64) {
    let mut out = (0.0, 0.0, 0.0);
    for m in &series.components[axis] {
        let k = m.coeff * series.b.powi(m.b_pow as i32) * series.c.powi(m.c_pow as i32);
        if m.kind == TrigKind::Const {
            out.0 += k;
            continue;
        }
        let [p, q] = m.harmonics;
        let arg = p as f64 * a + q as f64 * b;
        out.0 += k * (arg.cos() - 1.0);
        out.1 -= k * p as f64 * arg.sin();
        out.2 -= k * q as f64 * arg.sin();
    }
    out
}

impl FormalIntegral {
    /// Candidate `z` values at `(x, y)`: one for the plane, one per sheet otherwise.
    pub fn z_of(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        match &self.relation {
            IntegralRelation::Plane { point, normal } => {
                Ok(vec![point[2] + normal[0] * (x - point[0]) + normal[1] * (y - point[1])])
            }
            IntegralRelation::Sheets { series } => {
                let m = first_order_matrix(series);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < ELIMINATION_FLOOR {
                    return Err(Error::EliminationFailed { det });
                }
                let (dx, dy) = (x - series.base[0], y - series.base[1]);
                let c1 = (1.0 + (m[1][1] * dx - m[0][1] * dy) / det).clamp(-1.0, 1.0);
                let c2 = (1.0 + (m[0][0] * dy - m[1][0] * dx) / det).clamp(-1.0, 1.0);
                let mut out: Vec<f64> = Vec::new();
                // the series is even in (A, B): (A, ±B) from the first-order
                // inversion, then a coarse grid when second-order terms dominate
                let mut starts = vec![[c1.acos(), c2.acos()], [c1.acos(), -c2.acos()]];
                let tau = std::f64::consts::TAU;
                for i in 0..4 {
                    for j in 0..8 {
                        starts.push([tau * (i as f64 + 0.5) / 8.0, tau * (j as f64 + 0.5) / 8.0]);
                    }
                }
                for start in starts {
                    if let Some([a, b]) = solve_phases(series, x, y, start) {
                        let z = component_at_phases(series, 2, a, b).0;
                        if !out.iter().any(|&o| (o - z).abs() <= 1e-12 * (1.0 + z.abs())) {
                            out.push(z);
                        }
                    }
                }
                if out.is_empty() {
                    return Err(Error::NoConvergence {
                        iterations: 50,
                        residual: f64::NAN,
                    });
                }
                Ok(out)
            }
            IntegralRelation::Coordinate { .. } => {
                Err(Error::Unsupported("time-dependent integrals have no z(x, y)".into()))
            }
        }
    }

    /// Distance in `z` from the point to the nearest sheet.
    pub fn residual(&self, p: &Vec3<f64>) -> Result<f64> {
        let zs = self.z_of(p[0], p[1])?;
        Ok(zs.iter().map(|z| (p[2] - z).abs()).fold(f64::INFINITY, f64::min))
    }

    /// Value of a time-dependent integral at `(p, t)`.
    pub fn value_at(&self, p: &Vec3<f64>, t: f64) -> Result<f64> {
        match &self.relation {
            IntegralRelation::Coordinate { axis, series } => Ok(p[*axis] - (series.evaluate(t)[*axis] - series.base[*axis])),
            _ => Err(Error::Unsupported("not a time-dependent integral".into())),
        }
    }

    /// Signed perpendicular distance from a plane integral.
    pub fn plane_distance(&self, p: &Vec3<f64>) -> Result<f64> {
        match &self.relation {
            IntegralRelation::Plane { point, normal } => Ok(dot(normal, &sub(p, point)) / dot(normal, normal).sqrt()),
            _ => Err(Error::Unsupported("not a plane".into())),
        }
    }
}

/// Newton in the phases for the `x`, `y` components.
fn solve_phases(series: &TrigSeries, x: f64, y: f64, start: [f64; 2]) -> Option<[f64; 2]> {
    let mut u = start;
    let scale = 1.0 + x.abs() + y.abs();
    for _ in 0..50 {
        let (fx, xa, xb) = component_at_phases(series, 0, u[0], u[1]);
        let (fy, ya, yb) = component_at_phases(series, 1, u[0], u[1]);
        let r = [fx - x, fy - y];
        if r[0].abs().max(r[1].abs()) < 1e-13 * scale {
            return Some(u);
        }
        let det = xa * yb - xb * ya;
        if det.abs() < 1e-300 {
            return None;
        }
        let du = [(yb * r[0] - xb * r[1]) / det, (xa * r[1] - ya * r[0]) / det];
        // keep steps inside one period
        let len = du[0].hypot(du[1]);
        let f = if len > 0.5 { 0.5 / len } else { 1.0 };
        u = [u[0] - f * du[0], u[1] - f * du[1]];
    }
    None
}

/// Per-coordinate `|numerical − series|` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub times: Vec<f64>,
    pub sigma: Vec<Vec3<f64>>,
    pub mean: Vec3<f64>,
}

impl Deviation {
    /// Mean over time and the three coordinates.
    pub fn overall_mean(&self) -> f64 {
        self.mean.iter().sum::<f64>() / 3.0
    }

    pub fn max(&self) -> f64 {
        self.sigma.iter().flatten().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// CSV `t,sigma_x,sigma_y,sigma_z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,sigma_x,sigma_y,sigma_z")?;
        for (t, s) in self.times.iter().zip(&self.sigma) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", t, s[0], s[1], s[2])?;
        }
        Ok(())
    }
}

/// Deviation of `series` from `traj` on the grid `t_start + k·dt`.
pub fn deviation(series: &TrigSeries, traj: &Trajectory<f64>, dt: f64) -> Result<Deviation> {
    let samples = traj.sample_uniform(dt)?;
    let mut times = Vec::with_capacity(samples.len());
    let mut sigma = Vec::with_capacity(samples.len());
    let mut sum = [0.0; 3];
    for (t, x) in samples {
        let s = series.evaluate(t);
        let d: Vec3<f64> = std::array::from_fn(|i| (x[i] - s[i]).abs());
        for i in 0..3 {
            sum[i] += d[i];
        }
        times.push(t);
        sigma.push(d);
    }
    let n = times.len().max(1) as f64;
    Ok(Deviation {
        times,
        sigma,
        mean: sum.map(|v| v / n),
    })
}
