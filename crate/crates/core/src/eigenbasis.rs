//! Harmonic-oscillator eigenfunctions in natural units (m = ħ = 1).
//!
//! The 1-D factor for quantum number `n` and frequency `ω` is
//!
//! ```text
//! ψ_n(x) = (ω/π)^{1/4} exp(-ω x²/2) H_n(√ω x) / √(2ⁿ n!)
//! ```
//!
//! and 3-D states are products of three such factors. Besides the normalized
//! values this module exposes the *reduced* factor `H_n(√ω x)/√(2ⁿ n!)`
//! without the Gaussian envelope; superpositions that share one frequency
//! triplet share the envelope, so nodal sets and velocities only depend on
//! the reduced polynomials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Largest supported quantum number per axis.
pub const MAX_QUANTUM_NUMBER: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorMode<T> {
    pub n: u32,
    pub omega: T,
}

impl<T: Real> OscillatorMode<T> {
    pub fn new(n: u32, omega: T) -> Result<Self> {
        if n > MAX_QUANTUM_NUMBER {
            return Err(Error::InvalidInput(format!(
                "quantum number {n} exceeds {MAX_QUANTUM_NUMBER}"
            )));
        }
        if !(omega > T::zero()) || !omega.is_finite() {
            return Err(Error::InvalidInput(format!("frequency must be positive, got {omega}")));
        }
        Ok(Self { n, omega })
    }

    pub fn energy(&self) -> T {
        (T::lit(self.n as f64) + T::lit(0.5)) * self.omega
    }

    /// `1/√(2ⁿ n!)`.
    fn hermite_norm(&self) -> T {
        T::one() / (T::lit(2f64.powi(self.n as i32)) * T::lit(factorial(self.n) as f64)).sqrt()
    }

    /// Reduced factor `h(x) = H_n(√ω x)/√(2ⁿ n!)` and its x-derivative.
    pub fn reduced(&self, x: T) -> (T, T) {
        let s = self.omega.sqrt();
        let (hn, hnm1) = hermite_pair(self.n, s * x);
        let c = self.hermite_norm();
        let dh = if self.n == 0 {
            T::zero()
        } else {
            T::lit(2.0 * self.n as f64) * hnm1 * s
        };
        (c * hn, c * dh)
    }

    /// Reduced factor with first and second derivatives.
    pub fn reduced2(&self, x: T) -> (T, T, T) {
        let s = self.omega.sqrt();
        let u = s * x;
        let c = self.hermite_norm();
        let n = self.n;
        let h = hermite(n, u);
        let d1 = if n >= 1 {
            T::lit(2.0 * n as f64) * hermite(n - 1, u) * s
        } else {
            T::zero()
        };
        let d2 = if n >= 2 {
            T::lit(4.0 * (n * (n - 1)) as f64) * hermite(n - 2, u) * self.omega
        } else {
            T::zero()
        };
        (c * h, c * d1, c * d2)
    }

    /// Normalized value and derivative of the 1-D eigenfunction.
    pub fn value_and_derivative(&self, x: T) -> (T, T) {
        let env = envelope_1d(self.omega, x);
        let (h, dh) = self.reduced(x);
        (env * h, env * (dh - self.omega * x * h))
    }
}

/// `(ω/π)^{1/4} exp(-ω x²/2)`.
pub fn envelope_1d<T: Real>(omega: T, x: T) -> T {
    (omega / T::PI()).powf(T::lit(0.25)) * (-(omega * x * x) / T::lit(2.0)).exp()
}

/// Product of the three 1-D envelopes.
pub fn envelope<T: Real>(omegas: &Vec3<T>, x: &Vec3<T>) -> T {
    (0..3).map(|k| envelope_1d(omegas[k], x[k])).fold(T::one(), |a, b| a * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode3D<T> {
    pub modes: [OscillatorMode<T>; 3],
}

impl<T: Real> Mode3D<T> {
    pub fn new(n: [u32; 3], omegas: [T; 3]) -> Result<Self> {
        Ok(Self {
            modes: [
                OscillatorMode::new(n[0], omegas[0])?,
                OscillatorMode::new(n[1], omegas[1])?,
                OscillatorMode::new(n[2], omegas[2])?,
            ],
        })
    }

    pub fn quantum_numbers(&self) -> [u32; 3] {
        [self.modes[0].n, self.modes[1].n, self.modes[2].n]
    }

    pub fn omegas(&self) -> [T; 3] {
        [self.modes[0].omega, self.modes[1].omega, self.modes[2].omega]
    }

    /// Reduced (envelope-free) value and gradient.
    pub fn reduced(&self, x: &Vec3<T>) -> (T, Vec3<T>) {
        let f: [(T, T); 3] = [
            self.modes[0].reduced(x[0]),
            self.modes[1].reduced(x[1]),
            self.modes[2].reduced(x[2]),
        ];
        let value = f[0].0 * f[1].0 * f[2].0;
        let grad = [
            f[0].1 * f[1].0 * f[2].0,
            f[0].0 * f[1].1 * f[2].0,
            f[0].0 * f[1].0 * f[2].1,
        ];
        (value, grad)
    }
}

/// Physicists' Hermite polynomial by the three-term recurrence.
pub fn hermite<T: Real>(n: u32, u: T) -> T {
    hermite_pair(n, u).0
}

/// `(H_n(u), H_{n-1}(u))`, with `H_{-1} = 0`.
fn hermite_pair<T: Real>(n: u32, u: T) -> (T, T) {
    let two = T::lit(2.0);
    let mut prev = T::zero();
    let mut cur = T::one();
    for k in 0..n {
        let next = two * u * cur - two * T::lit(k as f64) * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

pub fn eigenstate_value<T: Real>(mode: &Mode3D<T>, x: &Vec3<T>) -> T {
    (0..3)
        .map(|k| mode.modes[k].value_and_derivative(x[k]).0)
        .fold(T::one(), |a, b| a * b)
}

/// Analytic gradient; each component differentiates only its own 1-D factor.
pub fn eigenstate_gradient<T: Real>(mode: &Mode3D<T>, x: &Vec3<T>) -> Vec3<T> {
    let f: [(T, T); 3] = [
        mode.modes[0].value_and_derivative(x[0]),
        mode.modes[1].value_and_derivative(x[1]),
        mode.modes[2].value_and_derivative(x[2]),
    ];
    [
        f[0].1 * f[1].0 * f[2].0,
        f[0].0 * f[1].1 * f[2].0,
        f[0].0 * f[1].0 * f[2].1,
    ]
}

/// `E = Σ (n_i + ½) ω_i`.
pub fn energy<T: Real>(mode: &Mode3D<T>) -> T {
    mode.modes.iter().map(|m| m.energy()).sum()
}
