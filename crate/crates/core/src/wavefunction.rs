//! Three-term superpositions Ψ(x,t) = Σ_j a_j Ψ_j(x) e^{-i E_j t}.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::eigenbasis::{energy, envelope, Mode3D};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// A normalized superposition of three eigenstates sharing one frequency triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpec<T> {
    pub amplitudes: [Complex<T>; 3],
    pub modes: [Mode3D<T>; 3],
    pub omegas: Vec3<T>,
    energies: Vec3<T>,
}

impl<T: Real> WaveSpec<T> {
    pub fn new(amplitudes: [Complex<T>; 3], quantum_numbers: [[u32; 3]; 3], omegas: Vec3<T>) -> Result<Self> {
        let modes = [
            Mode3D::new(quantum_numbers[0], omegas)?,
            Mode3D::new(quantum_numbers[1], omegas)?,
            Mode3D::new(quantum_numbers[2], omegas)?,
        ];
        let norm2: T = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
        if !((norm2 - T::one()).abs() <= tol) {
            return Err(Error::InvalidInput(format!(
                "amplitudes must satisfy |a|²+|b|²+|c|²=1, got {norm2}"
            )));
        }
        let energies = [energy(&modes[0]), energy(&modes[1]), energy(&modes[2])];
        Ok(Self {
            amplitudes,
            modes,
            omegas,
            energies,
        })
    }

    /// Real amplitudes `(a, b, c)`.
    pub fn real(abc: [T; 3], quantum_numbers: [[u32; 3]; 3], omegas: Vec3<T>) -> Result<Self> {
        Self::new(abc.map(|v| Complex::new(v, T::zero())), quantum_numbers, omegas)
    }

    /// Real amplitudes with `a = √(1 - b² - c²)`.
    pub fn with_small_amplitudes(b: T, c: T, quantum_numbers: [[u32; 3]; 3], omegas: Vec3<T>) -> Result<Self> {
        let a2 = T::one() - b * b - c * c;
        if a2 < T::zero() {
            return Err(Error::InvalidInput("b² + c² exceeds 1".into()));
        }
        Self::real([a2.sqrt(), b, c], quantum_numbers, omegas)
    }

    pub fn energies(&self) -> Vec3<T> {
        self.energies
    }

    pub fn quantum_numbers(&self) -> [[u32; 3]; 3] {
        self.modes.map(|m| m.quantum_numbers())
    }

    /// True when every amplitude has zero imaginary part.
    pub fn has_real_amplitudes(&self) -> bool {
        self.amplitudes.iter().all(|a| a.im == T::zero())
    }

    /// The same state multiplied by a global phase `e^{iα}`.
    pub fn with_global_phase(&self, alpha: T) -> Self {
        let ph = Complex::new(alpha.cos(), alpha.sin());
        Self {
            amplitudes: self.amplitudes.map(|a| a * ph),
            ..self.clone()
        }
    }

    pub fn to_config(&self) -> WaveSpecConfig {
        WaveSpecConfig {
            amplitudes: self.amplitudes.map(|a| [a.re.as_f64(), a.im.as_f64()]),
            modes: self.quantum_numbers(),
            omegas: self.omegas.map(|w| w.as_f64()),
        }
    }
}

/// Serialized form of a [`WaveSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpecConfig {
    pub amplitudes: [[f64; 2]; 3],
    pub modes: [[u32; 3]; 3],
    pub omegas: [f64; 3],
}

impl WaveSpecConfig {
    pub fn build<T: Real>(&self) -> Result<WaveSpec<T>> {
        WaveSpec::new(
            self.amplitudes.map(|[re, im]| Complex::new(T::lit(re), T::lit(im))),
            self.modes,
            self.omegas.map(T::lit),
        )
    }
}

/// Ψ and its spatial gradient split into real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSample<T> {
    pub psi_re: T,
    pub psi_im: T,
    pub grad_re: Vec3<T>,
    pub grad_im: Vec3<T>,
    /// `G = Ψ_R² + Ψ_I²`.
    pub g: T,
}

/// The envelope-free part `P = Ψ / K(x)` where `K` is the shared Gaussian
/// envelope, with its spatial gradient and time derivative.
///
/// `P` has the same zeros as Ψ and yields the same Bohmian velocity, but stays
/// well scaled far from the origin where Ψ itself underflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSample<T> {
    pub p_re: T,
    pub p_im: T,
    pub grad_re: Vec3<T>,
    pub grad_im: Vec3<T>,
    pub dt_re: T,
    pub dt_im: T,
    /// `Σ_j |a_j P_j|`, the natural magnitude of `P` at this point.
    pub scale: T,
}

impl<T: Real> ReducedSample<T> {
    /// `|P|²`.
    pub fn density(&self) -> T {
        self.p_re * self.p_re + self.p_im * self.p_im
    }
}

pub fn reduced_sample<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T) -> ReducedSample<T> {
    let mut out = ReducedSample {
        p_re: T::zero(),
        p_im: T::zero(),
        grad_re: [T::zero(); 3],
        grad_im: [T::zero(); 3],
        dt_re: T::zero(),
        dt_im: T::zero(),
        scale: T::zero(),
    };
    for j in 0..3 {
        let e = spec.energies[j];
        let (s, c) = (e * t).sin_cos();
        // a_j e^{-iEt}
        let amp = spec.amplitudes[j];
        let coef_re = amp.re * c + amp.im * s;
        let coef_im = amp.im * c - amp.re * s;
        let (val, grad) = spec.modes[j].reduced(x);
        out.p_re += coef_re * val;
        out.p_im += coef_im * val;
        for k in 0..3 {
            out.grad_re[k] += coef_re * grad[k];
            out.grad_im[k] += coef_im * grad[k];
        }
        // ∂t(coef) = -i E coef
        out.dt_re += e * coef_im * val;
        out.dt_im -= e * coef_re * val;
        out.scale += amp.norm() * val.abs();
    }
    out
}

pub fn sample<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T) -> WaveSample<T> {
    let r = reduced_sample(spec, x, t);
    let k = envelope(&spec.omegas, x);
    let mut grad_re = [T::zero(); 3];
    let mut grad_im = [T::zero(); 3];
    for i in 0..3 {
        let wx = spec.omegas[i] * x[i];
        grad_re[i] = k * (r.grad_re[i] - wx * r.p_re);
        grad_im[i] = k * (r.grad_im[i] - wx * r.p_im);
    }
    let psi_re = k * r.p_re;
    let psi_im = k * r.p_im;
    WaveSample {
        psi_re,
        psi_im,
        grad_re,
        grad_im,
        g: psi_re * psi_re + psi_im * psi_im,
    }
}

/// `(Ψ_R, Ψ_I)`; both vanish at a nodal point.
pub fn node_residual<T: Real>(spec: &WaveSpec<T>, x: &Vec3<T>, t: T) -> (T, T) {
    let s = sample(spec, x, t);
    (s.psi_re, s.psi_im)
}
