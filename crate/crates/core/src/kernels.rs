//! Power kernels `psi(x) = |x|^q` and the constant of their generalized Fourier transform.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Attraction and repulsion exponents, both in `[1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerKernelParams {
    pub q_a: f64,
    pub q_r: f64,
    pub dim: usize,
}

impl PowerKernelParams {
    pub fn new(q_a: f64, q_r: f64, dim: usize) -> Result<Self> {
        for (name, q) in [("q_a", q_a), ("q_r", q_r)] {
            if !(1.0..=2.0).contains(&q) {
                return Err(invalid(format!("{name} = {q} outside [1, 2]")));
            }
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(Self { q_a, q_r, dim })
    }

    /// Same exponent for attraction and repulsion.
    pub fn symmetric(q: f64, dim: usize) -> Result<Self> {
        Self::new(q, q, dim)
    }
}

/// `|x|^q` for a scalar, with the common exponents special-cased.
#[inline]
pub fn psi_1d(q: f64, x: f64) -> f64 {
    let a = x.abs();
    if q == 1.0 {
        a
    } else if q == 2.0 {
        a * a
    } else {
        a.powf(q)
    }
}

/// `|x|^q` with the Euclidean norm.
pub fn psi(q: f64, x: &[f64]) -> f64 {
    if x.len() == 1 {
        return psi_1d(q, x[0]);
    }
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if q == 2.0 {
        sq
    } else {
        sq.sqrt().powf(q)
    }
}

/// Derivative `q |x|^{q-2} x`; `sgn(x)` with `sgn(0) = 0` at `q = 1`, and `0` at the origin.
#[inline]
pub fn psi_prime_1d(q: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if q == 1.0 {
        x.signum()
    } else if q == 2.0 {
        2.0 * x
    } else {
        q * x.abs().powf(q - 1.0) * x.signum()
    }
}

/// `psi''(x) = q (q - 1) |x|^{q-2}` away from the origin.
pub fn psi_second_1d(q: f64, x: f64) -> f64 {
    if q == 1.0 {
        0.0
    } else if q == 2.0 {
        2.0
    } else {
        q * (q - 1.0) * x.abs().powf(q - 2.0)
    }
}

/// Gradient of `|v|^q`, written into `out`; zero at `v = 0`.
pub fn grad_psi(q: f64, v: &[f64], out: &mut [f64]) {
    if v.len() == 1 {
        out[0] = psi_prime_1d(q, v[0]);
        return;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let scale = if q == 2.0 { 2.0 } else { q * norm.powf(q - 2.0) };
    for (o, x) in out.iter_mut().zip(v) {
        *o = scale * x;
    }
}

/// Gamma function on the whole real line minus the poles, using the reflection
/// `Gamma(z) Gamma(1 - z) = pi / sin(pi z)` for negative arguments.
pub fn gamma(z: f64) -> f64 {
    if z < 0.5 {
        PI / ((PI * z).sin() * statrs::function::gamma::gamma(1.0 - z))
    } else {
        statrs::function::gamma::gamma(z)
    }
}

/// The positive constant `D_q` with `psi_hat(xi) = -2 (2 pi)^d D_q |xi|^{-d-q}`.
///
/// Valid for `q` in `(0, 2)`; at `q = 2` the kernel is a polynomial and its
/// generalized Fourier transform vanishes.
pub fn dq_constant(q: f64, d: usize) -> Result<f64> {
    if q == 2.0 {
        return Err(Error::DegenerateFourier);
    }
    if !(q > 0.0 && q < 2.0) {
        return Err(invalid(format!("D_q needs q in (0, 2), got {q}")));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let d = d as f64;
    let num = 2f64.powf(q + 0.5 * d) * gamma(0.5 * (d + q));
    let den = 2.0 * gamma(-0.5 * q);
    Ok(-(2.0 * PI).powf(-0.5 * d) * num / den)
}
