//! Total variation of particle clouds: through a kernel density estimate
//! `Q_h = K_h * mu_N`, or through the piecewise-constant density whose value on
//! each gap between consecutive particles is `1 / (N gap)`.

use serde::{Deserialize, Serialize};

use crate::energy::{total_energy, EnergyReport, ParticleSystem};
use crate::error::{invalid, Error, Result};
use crate::kernels::PowerKernelParams;
use crate::measures::{DiscreteMeasure, GridDensity1D, WeightedPoints};
use crate::tiling::GridDensityNd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `K(x) = (1 - |x|)_+`, product form in higher dimensions.
    Hat,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimatorConfig {
    pub kernel: Kernel,
    pub h: f64,
}

impl KernelEstimatorConfig {
    pub fn new(kernel: Kernel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { kernel, h })
    }

    /// Bandwidth `h = N^{-1/(2d+2)}`.
    pub fn with_default_bandwidth(kernel: Kernel, n: usize, d: usize) -> Self {
        Self {
            kernel,
            h: default_bandwidth(n, d),
        }
    }
}

/// `N^{-1/(2d+2)}`: tends to zero while `h^{2d} N` still diverges.
pub fn default_bandwidth(n: usize, d: usize) -> f64 {
    (n.max(1) as f64).powf(-1.0 / (2.0 * d as f64 + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvKind {
    Kde,
    Pwc,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub tv: f64,
    pub method: TvKind,
    /// Bandwidth for kernel estimates, `None` otherwise.
    pub h: Option<f64>,
}

/// Regularizer attached to a particle energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TvMethod {
    None,
    Kde(KernelEstimatorConfig),
    Pwc,
}

fn kernel_1d(kernel: Kernel, u: f64) -> f64 {
    match kernel {
        Kernel::Hat => (1.0 - u.abs()).max(0.0),
        Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
    }
}

fn kernel_1d_prime(kernel: Kernel, u: f64) -> f64 {
    match kernel {
        Kernel::Hat => {
            if u.abs() >= 1.0 || u == 0.0 {
                0.0
            } else {
                -u.signum()
            }
        }
        Kernel::Gaussian => -u * kernel_1d(Kernel::Gaussian, u),
    }
}

/// `Q_h(x) = 1/(N h^d) sum_i K((x - x_i)/h)` at a point.
pub fn kde_eval<M: WeightedPoints + ?Sized>(mu: &M, cfg: &KernelEstimatorConfig, x: &[f64]) -> f64 {
    let d = mu.dim();
    let mass = mu.mass();
    let scale = cfg.h.powi(d as i32);
    (0..mu.len())
        .map(|i| {
            let p = mu.point(i);
            let k: f64 = (0..d).map(|k| kernel_1d(cfg.kernel, (x[k] - p[k]) / cfg.h)).product();
            mu.weight(i) * k
        })
        .sum::<f64>()
        / (mass * scale)
}

/// `Q_h` sampled at the cell centers of a 1D grid.
pub fn kde_density(
    mu: &ParticleSystem,
    cfg: &KernelEstimatorConfig,
    x_min: f64,
    x_max: f64,
    cells: usize,
) -> Result<GridDensity1D> {
    if mu.dim() != 1 {
        return Err(Error::NotOneDimensional);
    }
    GridDensity1D::from_fn(x_min, x_max, cells, |x| kde_eval(mu, cfg, &[x]))
}

/// `Q_h` sampled at the cell centers of a d-dimensional grid.
pub fn kde_density_nd(
    mu: &ParticleSystem,
    cfg: &KernelEstimatorConfig,
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: Vec<usize>,
) -> Result<GridDensityNd> {
    if lo.len() != mu.dim() {
        return Err(Error::DimensionMismatch(lo.len(), mu.dim()));
    }
    GridDensityNd::from_fn(lo, hi, shape, |x| kde_eval(mu, cfg, x))
}

/// Breakpoints of the hat-kernel estimate with their jumps in `Q_h'`,
/// in units of `1/(N h^2)`, sorted by position.
fn hat_breakpoints(xs: &[f64], h: f64) -> Vec<(f64, f64, usize)> {
    let mut events = Vec::with_capacity(3 * xs.len());
    for (i, &x) in xs.iter().enumerate() {
        events.push((x - h, 1.0, i));
        events.push((x, -2.0, i));
        events.push((x + h, 1.0, i));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    events
}

fn hat_tv(xs: &[f64], h: f64) -> f64 {
    let events = hat_breakpoints(xs, h);
    let mut slope = 0.0;
    let mut tv = 0.0;
    for w in events.windows(2) {
        slope += w[0].1;
        tv += slope.abs() * (w[1].0 - w[0].0);
    }
    tv / (xs.len() as f64 * h * h)
}

fn gaussian_q(xs: &[f64], h: f64, x: f64) -> f64 {
    xs.iter().map(|p| kernel_1d(Kernel::Gaussian, (x - p) / h)).sum::<f64>() / (xs.len() as f64 * h)
}

fn gaussian_q_prime(xs: &[f64], h: f64, x: f64) -> f64 {
    xs.iter()
        .map(|p| kernel_1d_prime(Kernel::Gaussian, (x - p) / h))
        .sum::<f64>()
        / (xs.len() as f64 * h * h)
}

/// Interior extrema of the Gaussian estimate, located by sign changes of `Q_h'`
/// on a grid of spacing `h/40` and refined by bisection.
fn gaussian_extrema(xs: &[f64], h: f64) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * h;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * h;
    let n = (((hi - lo) / (h / 40.0)).ceil() as usize).max(2);
    let step = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut a = lo;
    let mut fa = gaussian_q_prime(xs, h, a);
    for k in 1..=n {
        let b = lo + k as f64 * step;
        let fb = gaussian_q_prime(xs, h, b);
        if fa == 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            let (mut l, mut r, mut fl) = (a, b, fa);
            for _ in 0..80 {
                let mid = 0.5 * (l + r);
                let fm = gaussian_q_prime(xs, h, mid);
                if fm * fl > 0.0 {
                    l = mid;
                    fl = fm;
                } else {
                    r = mid;
                }
            }
            out.push(0.5 * (l + r));
        }
        a = b;
        fa = fb;
    }
    out
}

fn gaussian_tv(xs: &[f64], h: f64) -> f64 {
    let ext = gaussian_extrema(xs, h);
    let mut prev = 0.0;
    let mut tv = 0.0;
    for e in &ext {
        let q = gaussian_q(xs, h, *e);
        tv += (q - prev).abs();
        prev = q;
    }
    tv + prev
}

fn positions_1d(mu: &ParticleSystem) -> Result<&[f64]> {
    if mu.dim() != 1 {
        return Err(Error::NotOneDimensional);
    }
    if mu.n() == 0 {
        return Err(Error::EmptyMeasure);
    }
    Ok(mu.positions())
}

/// `int |Q_h'| dx` in one dimension: exact for the hat kernel, and through the
/// values at the extrema of `Q_h` for the Gaussian.
pub fn kde_tv_1d(mu: &ParticleSystem, cfg: &KernelEstimatorConfig) -> Result<TvReport> {
    let xs = positions_1d(mu)?;
    let tv = match cfg.kernel {
        Kernel::Hat => hat_tv(xs, cfg.h),
        Kernel::Gaussian => gaussian_tv(xs, cfg.h),
    };
    Ok(TvReport {
        tv,
        method: TvKind::Kde,
        h: Some(cfg.h),
    })
}

/// `int |grad Q_h|` by forward differences of `Q_h` sampled on a grid.
pub fn kde_tv_nd(
    mu: &ParticleSystem,
    cfg: &KernelEstimatorConfig,
    lo: Vec<f64>,
    hi: Vec<f64>,
    shape: Vec<usize>,
) -> Result<TvReport> {
    let g = kde_density_nd(mu, cfg, lo, hi, shape)?;
    Ok(TvReport {
        tv: grid_tv_nd(&g),
        method: TvKind::Grid,
        h: Some(cfg.h),
    })
}

/// Isotropic total variation of a d-dimensional grid function, including the
/// jumps to zero outside the box.
pub fn grid_tv_nd(g: &GridDensityNd) -> f64 {
    let d = g.dim();
    let cell_vol = g.cell_volume();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * g.shape[k + 1];
    }
    let mut tv = 0.0;
    for flat in 0..g.cells.len() {
        let mut sq = 0.0;
        for k in 0..d {
            let i = (flat / strides[k]) % g.shape[k];
            let next = if i + 1 < g.shape[k] { g.cells[flat + strides[k]] } else { 0.0 };
            let diff = (next - g.cells[flat]) / g.spacing(k);
            sq += diff * diff;
        }
        tv += sq.sqrt() * cell_vol;
    }
    // the lower faces of the box
    for flat in 0..g.cells.len() {
        for k in 0..d {
            if (flat / strides[k]).is_multiple_of(g.shape[k]) {
                tv += g.cells[flat] * cell_vol / g.spacing(k);
            }
        }
    }
    tv
}

/// Gaps smaller than this count as coincident points.
pub const PWC_MIN_GAP: f64 = 1e-12;

/// Point-difference TV
/// `(1/N) [ sum_{i=2}^{N-1} |1/g_i - 1/g_{i-1}| + 1/g_1 + 1/g_{N-1} ]`
/// with `g_i = x_{i+1} - x_i` after sorting; infinite when two points coincide.
pub fn pwc_tv(mu: &ParticleSystem) -> Result<TvReport> {
    let xs = positions_1d(mu)?;
    if xs.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let tv = pwc_tv_sorted(&s);
    Ok(TvReport {
        tv,
        method: TvKind::Pwc,
        h: None,
    })
}

fn pwc_tv_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    let mut r = Vec::with_capacity(n - 1);
    for w in s.windows(2) {
        let gap = w[1] - w[0];
        if gap <= PWC_MIN_GAP {
            return f64::INFINITY;
        }
        r.push(1.0 / gap);
    }
    let inner: f64 = r.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    (inner + r[0] + r[n - 2]) / n as f64
}

/// Value of the regularizer for a particle system.
pub fn tv_value(mu: &ParticleSystem, method: &TvMethod) -> Result<f64> {
    match method {
        TvMethod::None => Ok(0.0),
        TvMethod::Pwc => Ok(pwc_tv(mu)?.tv),
        TvMethod::Kde(cfg) => {
            if mu.dim() == 1 {
                Ok(kde_tv_1d(mu, cfg)?.tv)
            } else {
                Err(invalid("kernel TV of particles is implemented in one dimension"))
            }
        }
    }
}

/// `total_energy + lambda * TV`; infinite for the point-difference TV on coincident points.
pub fn regularized_energy(
    mu: &ParticleSystem,
    omega: &DiscreteMeasure,
    params: &PowerKernelParams,
    lambda: f64,
    method: &TvMethod,
) -> Result<EnergyReport> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let base = total_energy(mu, omega, params)?;
    if lambda == 0.0 || matches!(method, TvMethod::None) {
        return Ok(base.with_tv(lambda, 0.0));
    }
    let tv = tv_value(mu, method)?;
    Ok(base.with_tv(lambda, tv))
}

/// A subgradient of the point-difference TV with respect to the positions; zero
/// is selected for the terms whose neighbouring gaps are equal.
pub fn pwc_tv_gradient(mu: &ParticleSystem) -> Result<Vec<f64>> {
    let xs = positions_1d(mu)?;
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let s: Vec<f64> = order.iter().map(|i| xs[*i]).collect();
    let gaps: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.iter().any(|g| *g <= PWC_MIN_GAP) {
        return Err(invalid("point-difference TV is not differentiable at coincident points"));
    }
    let r: Vec<f64> = gaps.iter().map(|g| 1.0 / g).collect();
    let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
    let m = r.len();
    // d TV / d r_i, up to the factor 1/N
    let mut dr = vec![0.0; m];
    for i in 1..m {
        let sg = sign(r[i] - r[i - 1]);
        dr[i] += sg;
        dr[i - 1] -= sg;
    }
    dr[0] += 1.0;
    dr[m - 1] += 1.0;
    let mut sorted_grad = vec![0.0; n];
    for i in 0..m {
        // r_i = 1/(s_{i+1} - s_i)
        let dg = -dr[i] * r[i] * r[i] / n as f64;
        sorted_grad[i + 1] += dg;
        sorted_grad[i] -= dg;
    }
    let mut grad = vec![0.0; n];
    for (k, i) in order.iter().enumerate() {
        grad[*i] = sorted_grad[k];
    }
    Ok(grad)
}

/// Gradient of the kernel TV in one dimension. For the hat kernel every breakpoint
/// contributes `|slope left| - |slope right|`; for the Gaussian the extrema are
/// held fixed, which is exact by stationarity.
pub fn kde_tv_gradient(mu: &ParticleSystem, cfg: &KernelEstimatorConfig) -> Result<Vec<f64>> {
    let xs = positions_1d(mu)?;
    let n = xs.len();
    let h = cfg.h;
    let mut grad = vec![0.0; n];
    match cfg.kernel {
        Kernel::Hat => {
            let scale = 1.0 / (n as f64 * h * h);
            let mut slope = 0.0f64;
            for (_, jump, i) in hat_breakpoints(xs, h) {
                let after = slope + jump;
                grad[i] += (slope.abs() - after.abs()) * scale;
                slope = after;
            }
        }
        Kernel::Gaussian => {
            let ext = gaussian_extrema(xs, h);
            let values: Vec<f64> = ext.iter().map(|e| gaussian_q(xs, h, *e)).collect();
            // TV = sum_k |v_k - v_{k-1}| + v_last with v_{-1} = 0
            let mut coeff = vec![0.0; ext.len()];
            let mut prev = 0.0;
            for (k, v) in values.iter().enumerate() {
                let sg = if *v > prev { 1.0 } else if *v < prev { -1.0 } else { 0.0 };
                coeff[k] += sg;
                if k > 0 {
                    coeff[k - 1] -= sg;
                }
                prev = *v;
            }
            if let Some(last) = coeff.last_mut() {
                *last += 1.0;
            }
            for (e, c) in ext.iter().zip(&coeff) {
                for (i, x) in xs.iter().enumerate() {
                    // d/dx_i of K((e - x_i)/h) / (N h)
                    grad[i] -= c * kernel_1d_prime(Kernel::Gaussian, (e - x) / h) / (n as f64 * h * h);
                }
            }
        }
    }
    Ok(grad)
}

/// Gradient of the chosen regularizer.
pub fn tv_gradient(mu: &ParticleSystem, method: &TvMethod) -> Result<Vec<f64>> {
    match method {
        TvMethod::None => Ok(vec![0.0; mu.positions().len()]),
        TvMethod::Pwc => pwc_tv_gradient(mu),
        TvMethod::Kde(cfg) => {
            if mu.dim() != 1 {
                return Err(invalid("kernel TV of particles is implemented in one dimension"));
            }
            kde_tv_gradient(mu, cfg)
        }
    }
}
