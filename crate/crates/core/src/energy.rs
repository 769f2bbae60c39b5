//! Attraction-repulsion energy in spatial and Fourier form.
//!
//! For a probability measure `mu` and a datum `omega` the energy is
//!
//! ```text
//! E[mu] = int int psi_a(x - y) d omega(y) d mu(x) - 1/2 int int psi_r(x - y) d mu(x) d mu(y)
//! ```
//!
//! With `psi_a = psi_r = |x|^q`, `q` in `[1, 2)`, the symmetrized energy
//! `E~ = -1/2 int int psi d[mu - omega] d[mu - omega]` equals
//! `D_q int |mu_hat - omega_hat|^2 |xi|^{-d-q} d xi` ([`fourier_energy_1d`]).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow1d::{rhs, FlowState};
use crate::kernels::{dq_constant, grad_psi, psi, psi_1d, PowerKernelParams};
use crate::measures::{DiscreteMeasure, WeightedPoints};

/// `N` equal-weight particles in R^d representing `(1/N) sum_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    dim: usize,
    positions: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "{} coordinates do not form a nonempty set of {dim}-vectors",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid("particle positions must be finite"));
        }
        Ok(Self { dim, positions })
    }

    pub fn from_1d(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::uniform(self.dim, self.positions.clone())
            .expect("particle systems are nonempty")
    }

    /// Positions sorted ascending (1D only).
    pub fn sorted_1d(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional);
        }
        let mut xs = self.positions.clone();
        xs.sort_by(f64::total_cmp);
        Ok(xs)
    }
}

impl WeightedPoints for ParticleSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.n()
    }
    fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
    fn weight(&self, _i: usize) -> f64 {
        1.0 / self.n() as f64
    }
    fn mass(&self) -> f64 {
        1.0
    }
}

/// Energy split into its terms; `total = attraction + interaction + lambda * tv_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub attraction: f64,
    pub interaction: f64,
    pub tv_term: f64,
    pub lambda: f64,
    pub total: f64,
    pub q_a: f64,
    pub q_r: f64,
    pub n_particles: usize,
}

impl EnergyReport {
    pub fn new(attraction: f64, interaction: f64, params: &PowerKernelParams, n: usize) -> Self {
        Self {
            attraction,
            interaction,
            tv_term: 0.0,
            lambda: 0.0,
            total: attraction + interaction,
            q_a: params.q_a,
            q_r: params.q_r,
            n_particles: n,
        }
    }

    pub fn with_tv(mut self, lambda: f64, tv: f64) -> Self {
        self.lambda = lambda;
        self.tv_term = tv;
        self.total = if lambda == 0.0 {
            self.attraction + self.interaction
        } else {
            self.attraction + self.interaction + lambda * tv
        };
        self
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(a, b))
    }
}

/// `(1/m_mu) sum_i w_i sum_k v_k psi_a(x_i - y_k)`.
pub fn attraction_energy<M, W>(mu: &M, omega: &W, q_a: f64) -> Result<f64>
where
    M: WeightedPoints + ?Sized,
    W: WeightedPoints + ?Sized,
{
    check_dims(mu.dim(), omega.dim())?;
    let d = mu.dim();
    let mut diff = vec![0.0; d];
    let mut acc = 0.0;
    for i in 0..mu.len() {
        let x = mu.point(i);
        let mut inner = 0.0;
        for k in 0..omega.len() {
            let y = omega.point(k);
            let r = if d == 1 {
                psi_1d(q_a, x[0] - y[0])
            } else {
                for (c, (a, b)) in diff.iter_mut().zip(x.iter().zip(y)) {
                    *c = a - b;
                }
                psi(q_a, &diff)
            };
            inner += omega.weight(k) * r;
        }
        acc += mu.weight(i) * inner;
    }
    Ok(acc / mu.mass())
}

fn pair_sum<M: WeightedPoints + ?Sized>(mu: &M, q: f64, i: usize) -> f64 {
    let d = mu.dim();
    let x = mu.point(i);
    let mut diff = vec![0.0; d];
    let mut s = 0.0;
    for j in (i + 1)..mu.len() {
        let y = mu.point(j);
        let r = if d == 1 {
            psi_1d(q, x[0] - y[0])
        } else {
            for (c, (a, b)) in diff.iter_mut().zip(x.iter().zip(y)) {
                *c = a - b;
            }
            psi(q, &diff)
        };
        s += mu.weight(j) * r;
    }
    mu.weight(i) * s
}

/// `-1/2 sum_{i,j} (w_i/m)(w_j/m) psi_r(x_i - x_j)`; the diagonal contributes nothing.
pub fn interaction_energy<M: WeightedPoints + ?Sized + Sync>(mu: &M, q_r: f64) -> f64 {
    let m = mu.mass();
    #[cfg(feature = "parallel")]
    let upper: f64 = {
        use rayon::prelude::*;
        (0..mu.len()).into_par_iter().map(|i| pair_sum(mu, q_r, i)).sum()
    };
    #[cfg(not(feature = "parallel"))]
    let upper: f64 = (0..mu.len()).map(|i| pair_sum(mu, q_r, i)).sum();
    // i < j half of the symmetric double sum
    -upper / (m * m)
}

/// Attraction plus interaction.
pub fn total_energy<M, W>(mu: &M, omega: &W, params: &PowerKernelParams) -> Result<EnergyReport>
where
    M: WeightedPoints + ?Sized + Sync,
    W: WeightedPoints + ?Sized,
{
    let attraction = attraction_energy(mu, omega, params.q_a)?;
    let interaction = interaction_energy(mu, params.q_r);
    Ok(EnergyReport::new(attraction, interaction, params, mu.len()))
}

/// Gradient of [`total_energy`] with respect to every particle position, row-major.
pub fn grad_particles<W>(mu: &ParticleSystem, omega: &W, params: &PowerKernelParams) -> Result<Vec<f64>>
where
    W: WeightedPoints + ?Sized,
{
    check_dims(mu.dim(), omega.dim())?;
    let d = mu.dim();
    let n = mu.n();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; n * d];
    let mut diff = vec![0.0; d];
    let mut g = vec![0.0; d];
    for i in 0..n {
        let x = mu.point(i);
        let out = &mut grad[i * d..(i + 1) * d];
        for k in 0..omega.len() {
            let y = omega.point(k);
            for (c, (a, b)) in diff.iter_mut().zip(x.iter().zip(y)) {
                *c = a - b;
            }
            grad_psi(params.q_a, &diff, &mut g);
            let w = omega.weight(k) * inv_n;
            for (o, v) in out.iter_mut().zip(&g) {
                *o += w * v;
            }
        }
    }
    // the pair term is antisymmetric, so each unordered pair is visited once
    let inv_n2 = inv_n * inv_n;
    for i in 0..n {
        for j in (i + 1)..n {
            for c in 0..d {
                diff[c] = mu.positions[i * d + c] - mu.positions[j * d + c];
            }
            grad_psi(params.q_r, &diff, &mut g);
            for c in 0..d {
                grad[i * d + c] -= inv_n2 * g[c];
                grad[j * d + c] += inv_n2 * g[c];
            }
        }
    }
    Ok(grad)
}

/// Merges `mu - omega` into one signed atom list, combining coincident locations.
fn signed_atoms(mu: &DiscreteMeasure, omega: &DiscreteMeasure) -> Vec<(Vec<f64>, f64)> {
    let mut atoms: Vec<(Vec<f64>, f64)> = Vec::with_capacity(mu.len() + omega.len());
    let mut push = |x: &[f64], a: f64| {
        if let Some(slot) = atoms.iter_mut().find(|(p, _)| p.as_slice() == x) {
            slot.1 += a;
        } else {
            atoms.push((x.to_vec(), a));
        }
    };
    for i in 0..mu.len() {
        push(mu.point(i), mu.weight(i));
    }
    for k in 0..omega.len() {
        push(omega.point(k), -omega.weight(k));
    }
    atoms
}

fn check_equal_mass(mu: &DiscreteMeasure, omega: &DiscreteMeasure) -> Result<()> {
    let (a, b) = (mu.mass(), omega.mass());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(Error::MassMismatch(a, b));
    }
    Ok(())
}

/// `-1/2 int int psi(y - x) d[mu - omega](x) d[mu - omega](y)` as an exact double sum.
pub fn symmetrized_energy(mu: &DiscreteMeasure, omega: &DiscreteMeasure, q: f64) -> Result<f64> {
    check_dims(mu.dim(), omega.dim())?;
    check_equal_mass(mu, omega)?;
    let atoms = signed_atoms(mu, omega);
    let mut diff = vec![0.0; mu.dim()];
    let mut acc = 0.0;
    for (j, (xj, aj)) in atoms.iter().enumerate() {
        for (xk, ak) in &atoms[j + 1..] {
            for (c, (a, b)) in diff.iter_mut().zip(xj.iter().zip(xk)) {
                *c = a - b;
            }
            acc += aj * ak * psi(q, &diff);
        }
    }
    // off-diagonal pairs counted once; the -1/2 and the factor 2 cancel
    Ok(-acc)
}

/// Datum self-energy `C = 1/2 int int psi d omega d omega`, so that `E = E~ + C`
/// when `psi_a = psi_r`.
pub fn datum_self_energy(omega: &DiscreteMeasure, q: f64) -> f64 {
    let m = omega.mass();
    -interaction_energy(omega, q) * m * m
}

/// Quadrature for the frequency integral of [`fourier_energy_1d`].
///
/// The half-line `(0, inf)` is split into four pieces: `(0, xi_min)` is integrated
/// with the leading small-frequency term `|S(xi)|^2 ~ xi^2 (sum_j a_j x_j)^2`;
/// `(xi_min, pi/span)` uses Gauss-Legendre panels equally spaced in `log xi`;
/// `(pi/span, xi_max)` uses Gauss-Legendre panels of width at most a quarter of
/// the shortest period; `(xi_max, inf)` uses the oscillation average
/// `sum_j a_j^2` of `|S|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierQuadrature {
    pub xi_min: f64,
    pub xi_max: f64,
    pub panels_per_decade: usize,
    pub order: usize,
}

impl Default for FourierQuadrature {
    fn default() -> Self {
        Self {
            xi_min: 1e-6,
            xi_max: 1e4,
            panels_per_decade: 8,
            order: 10,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` via Newton iteration on `P_n`, `n >= 2`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `D_q int_R |mu_hat(xi) - omega_hat(xi)|^2 |xi|^{-1-q} d xi` for 1D probability measures.
pub fn fourier_energy_1d(
    mu: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    q: f64,
    quad: &FourierQuadrature,
) -> Result<f64> {
    if mu.dim() != 1 || omega.dim() != 1 {
        return Err(Error::NotOneDimensional);
    }
    for m in [mu.mass(), omega.mass()] {
        if (m - 1.0).abs() > 1e-9 {
            return Err(Error::NotProbability(m));
        }
    }
    if !(1.0..2.0).contains(&q) {
        if q == 2.0 {
            return Err(Error::DegenerateFourier);
        }
        return Err(invalid(format!("q = {q} outside [1, 2)")));
    }
    let dq = dq_constant(q, 1)?;

    let raw = signed_atoms(mu, omega);
    let (rmin, rmax) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(x[0]), b.max(x[0])));
    let center = 0.5 * (rmin + rmax);
    let atoms: Vec<(f64, f64)> = raw
        .into_iter()
        .filter(|(_, a)| *a != 0.0)
        .map(|(x, a)| (x[0] - center, a))
        .collect();
    if atoms.is_empty() {
        return Ok(0.0);
    }
    let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(0.0);
    }

    let weight = |xi: f64| xi.powf(-1.0 - q);
    let s2 = |xi: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for &(x, a) in &atoms {
            let (s, c) = (x * xi).sin_cos();
            re += a * c;
            im -= a * s;
        }
        re * re + im * im
    };
    let (gl_x, gl_w) = gauss_legendre(quad.order.max(2));

    let first_moment: f64 = atoms.iter().map(|(x, a)| a * x).sum();
    let xi_min = quad.xi_min;
    let xi_split = std::f64::consts::PI / span;
    let xi_max = quad.xi_max.max(2.0 * xi_split);

    // (0, xi_min)
    let mut total = first_moment * first_moment * xi_min.powf(2.0 - q) / (2.0 - q);

    // (xi_min, xi_split), panels in log xi
    if xi_split > xi_min {
        let (l0, l1) = (xi_min.ln(), xi_split.ln());
        let decades = (l1 - l0) / std::f64::consts::LN_10;
        let panels = ((decades * quad.panels_per_decade as f64).ceil() as usize).max(1);
        let h = (l1 - l0) / panels as f64;
        for p in 0..panels {
            let a = l0 + p as f64 * h;
            for (t, w) in gl_x.iter().zip(&gl_w) {
                let xi = (a + 0.5 * h * (t + 1.0)).exp();
                total += 0.5 * h * w * xi * s2(xi) * weight(xi);
            }
        }
    }

    // (xi_split, xi_max), uniform panels; exp(-i x xi) advanced by rotation between panels
    let width_cap = 0.25 * 2.0 * std::f64::consts::PI / (2.0 * lo.abs().max(hi.abs()));
    let panels = ((xi_max - xi_split) / width_cap).ceil() as usize;
    let h = (xi_max - xi_split) / panels as f64;
    let node_offsets: Vec<f64> = gl_x.iter().map(|t| 0.5 * h * (t + 1.0)).collect();
    let offset_phase: Vec<Vec<(f64, f64)>> = atoms
        .iter()
        .map(|&(x, _)| {
            node_offsets
                .iter()
                .map(|o| {
                    let (s, c) = (x * o).sin_cos();
                    (c, -s)
                })
                .collect()
        })
        .collect();
    let step_phase: Vec<(f64, f64)> = atoms
        .iter()
        .map(|&(x, _)| {
            let (s, c) = (x * h).sin_cos();
            (c, -s)
        })
        .collect();
    let mut panel_phase: Vec<(f64, f64)> = atoms
        .iter()
        .map(|&(x, _)| {
            let (s, c) = (x * xi_split).sin_cos();
            (c, -s)
        })
        .collect();
    let cmul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    for p in 0..panels {
        let a = xi_split + p as f64 * h;
        if p % 256 == 0 && p > 0 {
            for (ph, &(x, _)) in panel_phase.iter_mut().zip(&atoms) {
                let (s, c) = (x * a).sin_cos();
                *ph = (c, -s);
            }
        }
        for (k, w) in gl_w.iter().enumerate() {
            let xi = a + node_offsets[k];
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &(_, alpha)) in atoms.iter().enumerate() {
                let e = cmul(panel_phase[j], offset_phase[j][k]);
                re += alpha * e.0;
                im += alpha * e.1;
            }
            total += 0.5 * h * w * (re * re + im * im) * weight(xi);
        }
        for (ph, st) in panel_phase.iter_mut().zip(&step_phase) {
            *ph = cmul(*ph, *st);
        }
    }

    // (xi_max, inf)
    let diag: f64 = atoms.iter().map(|(_, a)| a * a).sum();
    total += diag * xi_max.powf(-q) / q;

    // even integrand: the full line is twice the half line
    Ok(2.0 * dq * total)
}

/// Dissipation `D[mu] = int_0^1 |velocity(z)|^2 dz` of a 1D flow state; always `>= 0`.
pub fn dissipation(state: &FlowState) -> Result<f64> {
    let v = rhs(state)?;
    Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
}
