//! First-order minimizers: Armijo gradient descent for particle energies and a
//! projected first-order solver for the grid-discretized regularized problem
//!
//! ```text
//! minimize (u - w)^T A (u - w) + lambda sum_i |u_{i+1} - u_i|   s.t.  u >= 0, sum u = sum w
//! ```
//!
//! with `A_jk = -1/2 psi(dx |j - k|) dx^2`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{grad_particles, EnergyReport, ParticleSystem};
use crate::error::{invalid, Error, Result};
use crate::kernels::{psi_1d, PowerKernelParams};
use crate::measures::{DiscreteMeasure, GridDensity1D, WeightedPoints};
use crate::tv::{regularized_energy, tv_gradient, TvMethod, PWC_MIN_GAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub seed: u64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-9,
            step0: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            seed: 0,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.grad_tol > 0.0) || !(self.step0 > 0.0) {
            return Err(invalid("max_iters, grad_tol and step0 must be positive"));
        }
        for (name, v) in [("backtrack_factor", self.backtrack_factor), ("armijo_c", self.armijo_c)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// One row of an optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// CSV `iter,energy,grad_norm,step`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> Result<()> {
    let io = |e: std::io::Error| invalid(format!("trace write: {e}"));
    writeln!(w, "iter,energy,grad_norm,step").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{:?},{:?},{:?}", r.iter, r.energy, r.grad_norm, r.step).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentResult {
    pub particles: ParticleSystem,
    pub report: EnergyReport,
    pub trace: Vec<TraceRow>,
    /// True when the gradient tolerance was met.
    pub converged: bool,
    pub iterations: usize,
}

/// `n` particles drawn uniformly from the box `[lo, hi]^dim`.
pub fn random_particles(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<ParticleSystem> {
    if !(lo < hi) {
        return Err(invalid("random particles need lo < hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    ParticleSystem::new(dim, pos)
}

fn objective_gradient(
    mu: &ParticleSystem,
    omega: &DiscreteMeasure,
    params: &PowerKernelParams,
    lambda: f64,
    method: &TvMethod,
) -> Result<Vec<f64>> {
    let mut g = grad_particles(mu, omega, params)?;
    if lambda > 0.0 && !matches!(method, TvMethod::None) {
        for (a, b) in g.iter_mut().zip(tv_gradient(mu, method)?) {
            *a += lambda * b;
        }
    }
    Ok(g)
}

/// Gradient descent with Armijo backtracking along `-N g`; the trial step starts at
/// `min(step0, 2 * previous step)`.
pub fn minimize_particles(
    mu0: &ParticleSystem,
    omega: &DiscreteMeasure,
    params: &PowerKernelParams,
    lambda: f64,
    method: &TvMethod,
    cfg: &DescentConfig,
) -> Result<DescentResult> {
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if matches!(method, TvMethod::Pwc) && lambda > 0.0 {
        if mu0.dim() != 1 {
            return Err(Error::NotOneDimensional);
        }
        let s = mu0.sorted_1d()?;
        if s.windows(2).any(|w| w[1] - w[0] <= PWC_MIN_GAP) {
            return Err(invalid("point-difference TV needs distinct initial points"));
        }
    }
    let n = mu0.n() as f64;
    let energy = |p: &ParticleSystem| regularized_energy(p, omega, params, lambda, method);
    let mut x = mu0.clone();
    let mut report = energy(&x)?;
    if !report.total.is_finite() {
        return Err(Error::NonFiniteEnergy(report.total));
    }
    let mut g = objective_gradient(&x, omega, params, lambda, method)?;
    let mut gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: report.total,
        grad_norm: gnorm,
        step: 0.0,
    }];
    let mut alpha_prev = cfg.step0;
    let mut converged = gnorm <= cfg.grad_tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iters {
        let slope = -n * g.iter().map(|v| v * v).sum::<f64>();
        let mut alpha = cfg.step0.min(2.0 * alpha_prev);
        let mut accepted = None;
        while alpha > 1e-300 {
            let mut trial = x.clone();
            for (p, gi) in trial.positions_mut().iter_mut().zip(&g) {
                *p -= alpha * n * gi;
            }
            let r = energy(&trial)?;
            if r.total <= report.total + cfg.armijo_c * alpha * slope {
                accepted = Some((trial, r));
                break;
            }
            alpha *= cfg.backtrack_factor;
        }
        let Some((trial, r)) = accepted else {
            break;
        };
        if r.total >= report.total {
            // no representable decrease left
            break;
        }
        iterations += 1;
        x = trial;
        report = r;
        alpha_prev = alpha;
        g = objective_gradient(&x, omega, params, lambda, method)?;
        gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        trace.push(TraceRow {
            iter: iterations,
            energy: report.total,
            grad_norm: gnorm,
            step: alpha,
        });
        converged = gnorm <= cfg.grad_tol;
    }
    Ok(DescentResult {
        particles: x,
        report,
        trace,
        converged,
        iterations,
    })
}

/// Euclidean projection onto `{u >= 0, sum u = mass}` by the sorted threshold rule.
pub fn project_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    assert!(mass > 0.0, "simplex mass must be positive");
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, x) in s.iter().enumerate() {
        acc += x;
        let t = (acc - mass) / (k + 1) as f64;
        if *x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMethod {
    /// Accelerated projected gradient on a Huber smoothing of the TV term.
    Fista,
    /// Projected subgradient with steps `step0 / sqrt(t)`.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSolverConfig {
    pub method: GridMethod,
    pub max_iters: usize,
    /// Subgradient base step; `None` uses the inverse Lipschitz constant of the quadratic part.
    pub step0: Option<f64>,
    /// Huber width for the TV term in the accelerated solver.
    pub tv_smoothing: f64,
    /// Stop once the projected step moves no entry by more than this.
    pub tol: f64,
}

impl Default for GridSolverConfig {
    fn default() -> Self {
        Self {
            method: GridMethod::Fista,
            max_iters: 5000,
            step0: None,
            tv_smoothing: 1e-3,
            tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridQpProblem {
    pub u0: GridDensity1D,
    pub w: GridDensity1D,
    pub q: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub u: GridDensity1D,
    /// Energy split of the best iterate: attraction and interaction of the discretized
    /// measures and the TV term.
    pub report: EnergyReport,
    /// `(u - w)^T A (u - w) + lambda TV(u)` at the best iterate; equals `report.total`
    /// minus the datum self-energy.
    pub objective: f64,
    /// `energy` is the best objective found up to each iteration.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
}

/// Symmetric Toeplitz matrix `A_jk = -1/2 psi(dx |j - k|) dx^2`, stored by its first row.
#[derive(Debug, Clone)]
pub struct GridForm {
    row: Vec<f64>,
}

impl GridForm {
    pub fn new(q: f64, dx: f64, m: usize) -> Self {
        Self {
            row: (0..m).map(|k| -0.5 * psi_1d(q, dx * k as f64) * dx * dx).collect(),
        }
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.row[j.abs_diff(k)]
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let m = v.len();
        for j in 0..m {
            let mut s = 0.0;
            for (k, vk) in v.iter().enumerate() {
                s += self.row[j.abs_diff(k)] * vk;
            }
            out[j] = s;
        }
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        let mut av = vec![0.0; v.len()];
        self.apply(v, &mut av);
        v.iter().zip(&av).map(|(a, b)| a * b).sum()
    }

    /// Largest eigenvalue of the form restricted to zero-sum vectors, by power iteration.
    pub fn zero_sum_spectral_radius(&self) -> f64 {
        let m = self.row.len();
        if m < 2 {
            return 0.0;
        }
        let center = |v: &mut [f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
        };
        let mut v: Vec<f64> = (0..m).map(|j| ((j as f64 + 1.0) * 0.7548776662).fract() - 0.5).collect();
        center(&mut v);
        let mut av = vec![0.0; m];
        let mut est = 0.0;
        for _ in 0..200 {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            self.apply(&v, &mut av);
            center(&mut av);
            let next: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut v, &mut av);
            if (next - est).abs() <= 1e-10 * next.abs() {
                est = next;
                break;
            }
            est = next;
        }
        est.abs()
    }
}

fn grid_tv(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `D^T phi(D u)` for the forward difference `D` and a scalar map `phi`.
fn tv_adjoint(u: &[f64], phi: impl Fn(f64) -> f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..u.len().saturating_sub(1) {
        let s = phi(u[i + 1] - u[i]);
        out[i + 1] += s;
        out[i] -= s;
    }
}

struct GridObjective<'a> {
    form: GridForm,
    w: &'a [f64],
    lambda: f64,
}

impl GridObjective<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let d: Vec<f64> = u.iter().zip(self.w).map(|(a, b)| a - b).collect();
        self.form.quad(&d) + self.lambda * grid_tv(u)
    }

    /// Gradient of the quadratic part plus `lambda D^T phi(D u)`.
    fn gradient(&self, u: &[f64], phi: impl Fn(f64) -> f64, out: &mut [f64]) {
        let d: Vec<f64> = u.iter().zip(self.w).map(|(a, b)| a - b).collect();
        self.form.apply(&d, out);
        out.iter_mut().for_each(|o| *o *= 2.0);
        if self.lambda > 0.0 {
            let mut t = vec![0.0; u.len()];
            tv_adjoint(u, phi, &mut t);
            for (o, v) in out.iter_mut().zip(&t) {
                *o += self.lambda * v;
            }
        }
    }
}

fn grid_report(u: &GridDensity1D, w: &GridDensity1D, q: f64, lambda: f64, form: &GridForm) -> Result<EnergyReport> {
    let m = u.len();
    let mut au = vec![0.0; m];
    form.apply(&u.cells, &mut au);
    // A already carries -1/2 dx^2
    let interaction: f64 = u.cells.iter().zip(&au).map(|(a, b)| a * b).sum();
    let attraction: f64 = -2.0 * w.cells.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>();
    let params = PowerKernelParams::symmetric(q, 1)?;
    Ok(EnergyReport::new(attraction, interaction, &params, m).with_tv(lambda, grid_tv(&u.cells)))
}

/// Solves the grid problem; every iterate is projected onto the feasible simplex
/// and the best one is returned.
pub fn minimize_grid(problem: &GridQpProblem, cfg: &GridSolverConfig) -> Result<GridResult> {
    let GridQpProblem { u0, w, q, lambda } = problem;
    if !(*lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(1.0..=2.0).contains(q) {
        return Err(invalid(format!("q = {q} outside [1, 2]")));
    }
    let m = w.len();
    if m < 2 {
        return Err(invalid("grid problem needs at least two cells"));
    }
    if u0.len() != m || u0.x_min != w.x_min || u0.x_max != w.x_max {
        return Err(Error::GridMismatch(u0.len(), m));
    }
    let mass: f64 = w.cells.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    if !(cfg.tv_smoothing > 0.0) {
        return Err(invalid("tv_smoothing must be positive"));
    }
    let dx = w.dx();
    let obj = GridObjective {
        form: GridForm::new(*q, dx, m),
        w: &w.cells,
        lambda: *lambda,
    };
    let l_quad = 2.0 * obj.form.zero_sum_spectral_radius() * 1.05;
    let mut u = project_simplex(&u0.cells, mass);
    let mut best = u.clone();
    let mut best_val = obj.value(&u);
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: best_val,
        grad_norm: 0.0,
        step: 0.0,
    }];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    match cfg.method {
        GridMethod::Fista => {
            let eps = cfg.tv_smoothing;
            let huber = move |t: f64| (t / eps).clamp(-1.0, 1.0);
            let smooth_value = |v: &[f64]| {
                let d: Vec<f64> = v.iter().zip(&w.cells).map(|(a, b)| a - b).collect();
                let tv: f64 = v
                    .windows(2)
                    .map(|p| {
                        let t = (p[1] - p[0]).abs();
                        if t <= eps {
                            0.5 * t * t / eps
                        } else {
                            t - 0.5 * eps
                        }
                    })
                    .sum();
                obj.form.quad(&d) + lambda * tv
            };
            let l = l_quad + lambda * 4.0 / eps;
            let step = if l > 0.0 { 1.0 / l } else { 1.0 };
            let mut y = u.clone();
            let mut t_k = 1.0f64;
            let mut prev_smooth = smooth_value(&u);
            for it in 1..=cfg.max_iters {
                obj.gradient(&y, huber, &mut g);
                let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let next = project_simplex(&trial, mass);
                let moved = next.iter().zip(&u).fold(0.0f64, |a, (x, v)| a.max((x - v).abs()));
                let s_val = smooth_value(&next);
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
                if s_val > prev_smooth {
                    // adaptive restart: drop the momentum
                    t_k = 1.0;
                    y = u.clone();
                    continue;
                }
                let beta = (t_k - 1.0) / t_next;
                y = next.iter().zip(&u).map(|(a, b)| a + beta * (a - b)).collect();
                t_k = t_next;
                u = next;
                prev_smooth = s_val;
                iterations = it;
                let val = obj.value(&u);
                if val < best_val {
                    best_val = val;
                    best.clone_from(&u);
                }
                trace.push(TraceRow {
                    iter: it,
                    energy: best_val,
                    grad_norm: moved / step,
                    step,
                });
                if moved <= cfg.tol {
                    break;
                }
            }
        }
        GridMethod::Subgradient => {
            let step0 = cfg.step0.unwrap_or(if l_quad > 0.0 { 1.0 / l_quad } else { 1.0 });
            if !(step0 > 0.0) {
                return Err(invalid("step0 must be positive"));
            }
            let sign = |t: f64| if t > 0.0 { 1.0 } else if t < 0.0 { -1.0 } else { 0.0 };
            for it in 1..=cfg.max_iters {
                obj.gradient(&u, sign, &mut g);
                let step = step0 / (it as f64).sqrt();
                let trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let next = project_simplex(&trial, mass);
                let moved = next.iter().zip(&u).fold(0.0f64, |a, (x, v)| a.max((x - v).abs()));
                u = next;
                iterations = it;
                let val = obj.value(&u);
                if val < best_val {
                    best_val = val;
                    best.clone_from(&u);
                }
                trace.push(TraceRow {
                    iter: it,
                    energy: best_val,
                    grad_norm: g.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                    step,
                });
                if moved <= cfg.tol {
                    break;
                }
            }
        }
    }
    let u_best = GridDensity1D::new(w.x_min, w.x_max, best)?;
    let report = grid_report(&u_best, w, *q, *lambda, &obj.form)?;
    Ok(GridResult {
        u: u_best,
        report,
        objective: best_val,
        trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::total_energy;
    use proptest::prelude::*;

    #[test]
    fn simplex_examples() {
        let p = project_simplex(&[0.5, 0.8, -0.1], 1.0);
        for (a, b) in p.iter().zip([0.35, 0.65, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let feasible = [0.2, 0.3, 0.5];
        assert_eq!(project_simplex(&feasible, 1.0), feasible.to_vec());
        let sym = project_simplex(&[4.0, 4.0, 4.0], 1.0);
        assert!(sym.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_particle_finds_the_dirac() {
        let omega = DiscreteMeasure::dirac(&[0.7]);
        let p = PowerKernelParams::new(2.0, 2.0, 1).unwrap();
        let mu0 = ParticleSystem::from_1d(&[-3.0]).unwrap();
        let r = minimize_particles(&mu0, &omega, &p, 0.0, &TvMethod::None, &DescentConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.particles.positions()[0] - 0.7).abs() <= 1e-6);
    }

    #[test]
    fn quadratic_pair_centers_on_the_datum() {
        let omega = DiscreteMeasure::dirac(&[0.0]);
        let p = PowerKernelParams::new(2.0, 2.0, 1).unwrap();
        let mu0 = ParticleSystem::from_1d(&[0.4, 1.9]).unwrap();
        let r = minimize_particles(&mu0, &omega, &p, 0.0, &TvMethod::None, &DescentConfig::default()).unwrap();
        let mean = r.particles.positions().iter().sum::<f64>() / 2.0;
        assert!(mean.abs() <= 1e-6);
        // the spread is free: both particles move by the same amount
        let gap = r.particles.positions()[1] - r.particles.positions()[0];
        assert!((gap - 1.5).abs() < 1e-9);
    }

    #[test]
    fn armijo_trace_is_monotone_and_stationary() {
        let omega = DiscreteMeasure::uniform_1d(&(0..40).map(|k| 0.2 + 0.2 * (k as f64 + 0.5) / 40.0).collect::<Vec<_>>())
            .unwrap();
        let p = PowerKernelParams::new(1.5, 1.5, 1).unwrap();
        let mu0 = random_particles(12, 1, 0.0, 1.0, 7).unwrap();
        let cfg = DescentConfig {
            grad_tol: 1e-7,
            max_iters: 20000,
            ..DescentConfig::default()
        };
        let r = minimize_particles(&mu0, &omega, &p, 0.0, &TvMethod::None, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert!(r.converged);
        let g = grad_particles(&r.particles, &omega, &p).unwrap();
        assert!(g.iter().all(|v| v.abs() <= cfg.grad_tol));
        let e = total_energy(&r.particles, &omega, &p).unwrap().total;
        assert_eq!(e, r.report.total);
    }

    #[test]
    fn pwc_descent_requires_distinct_points() {
        let omega = DiscreteMeasure::dirac(&[0.0]);
        let p = PowerKernelParams::new(1.5, 1.5, 1).unwrap();
        let mu0 = ParticleSystem::from_1d(&[0.0, 0.0, 1.0]).unwrap();
        assert!(minimize_particles(&mu0, &omega, &p, 0.1, &TvMethod::Pwc, &DescentConfig::default()).is_err());
        let ok = ParticleSystem::from_1d(&[-0.5, 0.1, 1.0]).unwrap();
        let r = minimize_particles(&ok, &omega, &p, 0.01, &TvMethod::Pwc, &DescentConfig::default()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert!(r.report.total.is_finite());
    }

    #[test]
    fn random_particles_are_reproducible() {
        let a = random_particles(5, 2, -1.0, 1.0, 42).unwrap();
        let b = random_particles(5, 2, -1.0, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_particles(5, 2, -1.0, 1.0, 43).unwrap());
        assert!(a.positions().iter().all(|x| (-1.0..1.0).contains(x)));
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn grid_form_is_psd_on_zero_sum_vectors() {
        for q in [1.0, 1.5, 1.9] {
            let f = GridForm::new(q, 0.05, 20);
            for seed in 0..20u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mean = v.iter().sum::<f64>() / 20.0;
                v.iter_mut().for_each(|x| *x -= mean);
                assert!(f.quad(&v) >= -1e-15);
            }
            assert!(f.zero_sum_spectral_radius() > 0.0);
        }
    }

    fn grid(cells: Vec<f64>) -> GridDensity1D {
        GridDensity1D::new(0.0, 1.0, cells).unwrap()
    }

    #[test]
    fn grid_solver_keeps_the_datum() {
        let w = grid((0..30).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).sin()).collect());
        let prob = GridQpProblem {
            u0: w.clone(),
            w: w.clone(),
            q: 1.0,
            lambda: 0.0,
        };
        let r = minimize_grid(&prob, &GridSolverConfig::default()).unwrap();
        assert!(r.objective.abs() < 1e-15);
        for (a, b) in r.u.cells.iter().zip(&w.cells) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_solver_reduces_the_objective() {
        let m = 50;
        let w = GridDensity1D::uniform(0.0, 1.0, 1.0, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let u0 = grid(project_simplex(&raw, m as f64));
        for q in [1.0, 1.5] {
            let prob = GridQpProblem {
                u0: u0.clone(),
                w: w.clone(),
                q,
                lambda: 0.0,
            };
            let r = minimize_grid(&prob, &GridSolverConfig::default()).unwrap();
            let initial = r.trace[0].energy;
            assert!(r.objective < 1e-4 * initial, "q={q}: {} vs {initial}", r.objective);
            assert!(r.trace.windows(2).all(|p| p[1].energy <= p[0].energy));
        }
    }

    #[test]
    fn grid_report_adds_back_the_datum_self_energy() {
        let w = grid(vec![2.0, 0.0, 1.0, 1.0]);
        let u0 = grid(vec![1.0, 1.0, 1.0, 1.0]);
        let prob = GridQpProblem {
            u0,
            w: w.clone(),
            q: 1.5,
            lambda: 0.0,
        };
        let cfg = GridSolverConfig {
            max_iters: 3,
            ..GridSolverConfig::default()
        };
        let r = minimize_grid(&prob, &cfg).unwrap();
        let form = GridForm::new(1.5, w.dx(), 4);
        let c = -form.quad(&w.cells);
        assert!((r.report.total - c - r.objective).abs() < 1e-14);
        // agrees with the particle energy of the midpoint atoms
        let mu = r.u.to_discrete();
        let om = w.to_discrete();
        let p = PowerKernelParams::symmetric(1.5, 1).unwrap();
        let e = total_energy(&mu, &om, &p).unwrap();
        let m = mu.mass();
        assert!((e.attraction * m - r.report.attraction).abs() < 1e-12);
        assert!((e.interaction * m * m - r.report.interaction).abs() < 1e-12);
    }

    #[test]
    fn grid_solver_rejects_bad_input() {
        let w = grid(vec![1.0, 1.0]);
        let bad = GridQpProblem {
            u0: w.clone(),
            w: w.clone(),
            q: 1.0,
            lambda: -1.0,
        };
        assert!(minimize_grid(&bad, &GridSolverConfig::default()).is_err());
        let one = GridQpProblem {
            u0: grid(vec![1.0]),
            w: grid(vec![1.0]),
            q: 1.0,
            lambda: 0.0,
        };
        assert!(minimize_grid(&one, &GridSolverConfig::default()).is_err());
    }

    #[test]
    fn subgradient_trace_is_best_iterate_monotone() {
        let w = grid((0..40).map(|i| if (10..20).contains(&i) { 3.0 } else { 0.5 }).collect());
        let u0 = GridDensity1D::uniform(0.0, 1.0, w.cells.iter().sum::<f64>() / 40.0, 40).unwrap();
        let prob = GridQpProblem {
            u0,
            w,
            q: 1.0,
            lambda: 1e-3,
        };
        let cfg = GridSolverConfig {
            method: GridMethod::Subgradient,
            max_iters: 500,
            ..GridSolverConfig::default()
        };
        let r = minimize_grid(&prob, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|p| p[1].energy <= p[0].energy));
        assert!(r.objective < r.trace[0].energy);
    }

    proptest! {
        #[test]
        fn projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..30), mass in 0.1f64..10.0) {
            let p = project_simplex(&v, mass);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - mass).abs() <= 1e-10 * mass.max(1.0));
            // idempotent
            let pp = project_simplex(&p, mass);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn projection_beats_feasible_points(v in prop::collection::vec(-2.0f64..2.0, 2..12),
                                            raw in prop::collection::vec(0.0f64..1.0, 12)) {
            let p = project_simplex(&v, 1.0);
            let s: f64 = raw[..v.len()].iter().sum::<f64>().max(1e-9);
            let other: Vec<f64> = raw[..v.len()].iter().map(|x| x / s).collect();
            let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            prop_assert!(d(&p) <= d(&other) + 1e-12);
        }
    }
}
