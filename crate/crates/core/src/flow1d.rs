//! One-dimensional Wasserstein gradient flow of the attraction-repulsion energy,
//! written for the pseudo-inverse `X(t, z)` of `mu(t)`:
//!
//! ```text
//! d/dt X(t, z) = -m int_0^1 psi_a'(X(t, z) - Y(s)) ds + int_0^1 psi_r'(X(t, z) - X(t, s)) ds
//! ```
//!
//! where `Y` is the pseudo-inverse of the datum `omega` of mass `m`. Both integrals
//! use the midpoint nodes of the quantile grid. For `q_a = 1` the attraction field
//! is `m (2 G(x) - 1)` with `G` the normalized CDF of the datum, reconstructed from
//! `Y` by linear interpolation; for `q_r = 1` and strictly increasing `X` the
//! repulsion field is exactly `2 z_j - 1`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{dissipation, EnergyReport};
use crate::error::{invalid, Error, Result};
use crate::kernels::{psi_1d, psi_prime_1d, PowerKernelParams};
use crate::measures::{
    is_nondecreasing, pseudo_inverse, quantile_node, wasserstein_p, GridDensity1D, PseudoInverse1D,
};

/// State of the flow at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub x: PseudoInverse1D,
    pub y: PseudoInverse1D,
    pub params: PowerKernelParams,
}

impl FlowState {
    pub fn new(x: PseudoInverse1D, y: PseudoInverse1D, params: PowerKernelParams) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::GridMismatch(x.len(), y.len()));
        }
        if (x.mass - 1.0).abs() > 1e-9 {
            return Err(Error::NotProbability(x.mass));
        }
        if params.dim != 1 {
            return Err(Error::NotOneDimensional);
        }
        Ok(Self { t: 0.0, x, y, params })
    }

    /// Builds the initial state from two grid densities; `mu0` is normalized to mass 1.
    pub fn from_grids(
        mu0: &GridDensity1D,
        omega: &GridDensity1D,
        params: PowerKernelParams,
        m: usize,
    ) -> Result<Self> {
        let mut x = pseudo_inverse(mu0, m)?;
        x.mass = 1.0;
        let y = pseudo_inverse(omega, m)?;
        Self::new(x, y, params)
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            other => Err(invalid(format!("unknown scheme {other:?} (euler|rk4)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt0: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub monotone_guard: bool,
    /// Integration stops early once `max |dX/dt| <= tol_steady`.
    pub tol_steady: f64,
    /// Spacing of recorded samples; `None` records every accepted step.
    pub sample_every: Option<f64>,
    /// Abort when `max |X|` exceeds this bound.
    pub max_abs: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-2,
            t_end: 1.0,
            scheme: Scheme::Rk4,
            monotone_guard: true,
            tol_steady: 0.0,
            sample_every: None,
            max_abs: 1e6,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0) {
            return Err(invalid("dt0 must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(invalid("t_end must be finite and >= 0"));
        }
        if let Some(s) = self.sample_every {
            if !(s > 0.0) {
                return Err(invalid("sample spacing must be positive"));
            }
        }
        Ok(())
    }
}

/// Sorted samples with prefix sums for O(log M) kernel averages at `q = 1, 2`.
struct SortedSamples<'a> {
    values: std::borrow::Cow<'a, [f64]>,
    prefix: Vec<f64>,
    mean: f64,
    mean_sq: f64,
}

impl<'a> SortedSamples<'a> {
    fn new(values: &'a [f64]) -> Self {
        let values: std::borrow::Cow<'a, [f64]> = if is_nondecreasing(values) {
            std::borrow::Cow::Borrowed(values)
        } else {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            std::borrow::Cow::Owned(v)
        };
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in values.iter() {
            acc += v;
            prefix.push(acc);
        }
        let n = values.len() as f64;
        let mean = acc / n;
        let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
        Self {
            values,
            prefix,
            mean,
            mean_sq,
        }
    }

    fn n(&self) -> f64 {
        self.values.len() as f64
    }

    /// `avg_k psi'(x - s_k)`.
    fn avg_psi_prime(&self, q: f64, x: f64) -> f64 {
        if q == 1.0 {
            let below = self.values.partition_point(|s| *s < x);
            let not_above = self.values.partition_point(|s| *s <= x);
            let above = self.values.len() - not_above;
            (below as f64 - above as f64) / self.n()
        } else if q == 2.0 {
            2.0 * (x - self.mean)
        } else {
            self.values.iter().map(|s| psi_prime_1d(q, x - s)).sum::<f64>() / self.n()
        }
    }

    /// `avg_k psi(x - s_k)`.
    fn avg_psi(&self, q: f64, x: f64) -> f64 {
        if q == 1.0 {
            let k = self.values.partition_point(|s| *s <= x);
            let lower = k as f64 * x - self.prefix[k];
            let upper = (self.prefix[self.values.len()] - self.prefix[k]) - (self.values.len() - k) as f64 * x;
            (lower + upper) / self.n()
        } else if q == 2.0 {
            x * x - 2.0 * x * self.mean + self.mean_sq
        } else {
            self.values.iter().map(|s| psi_1d(q, x - s)).sum::<f64>() / self.n()
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Attraction field `(psi_a' * omega)(x)` for each entry of `xs`.
fn attraction_field(y: &PseudoInverse1D, q_a: f64, xs: &[f64]) -> Vec<f64> {
    if q_a == 1.0 {
        xs.iter()
            .map(|&x| y.mass * (2.0 * y.interpolated_cdf(x) - 1.0))
            .collect()
    } else {
        let samples = SortedSamples::new(&y.values);
        xs.iter().map(|&x| y.mass * samples.avg_psi_prime(q_a, x)).collect()
    }
}

fn velocity_of(values: &[f64], y: &PseudoInverse1D, params: &PowerKernelParams) -> Vec<f64> {
    let m = values.len();
    let attraction = attraction_field(y, params.q_a, values);
    let fast = params.q_r == 1.0 && strictly_increasing(values);
    let samples = if fast { None } else { Some(SortedSamples::new(values)) };
    (0..m)
        .map(|j| {
            let repulsion = match &samples {
                None => 2.0 * quantile_node(j, m) - 1.0,
                Some(s) => s.avg_psi_prime(params.q_r, values[j]),
            };
            repulsion - attraction[j]
        })
        .collect()
}

/// Right-hand side `dX/dt` at every quantile node.
pub fn rhs(state: &FlowState) -> Result<Vec<f64>> {
    if state.x.len() != state.y.len() {
        return Err(Error::GridMismatch(state.x.len(), state.y.len()));
    }
    Ok(velocity_of(&state.x.values, &state.y, &state.params))
}

/// Energy of the state from midpoint double sums over the quantile nodes.
pub fn flow_energy(state: &FlowState) -> EnergyReport {
    let xs = &state.x.values;
    let ys = SortedSamples::new(&state.y.values);
    let own = SortedSamples::new(xs);
    let n = xs.len() as f64;
    let attraction = state.y.mass * xs.iter().map(|&x| ys.avg_psi(state.params.q_a, x)).sum::<f64>() / n;
    let interaction = -0.5 * xs.iter().map(|&x| own.avg_psi(state.params.q_r, x)).sum::<f64>() / n;
    EnergyReport::new(attraction, interaction, &state.params, xs.len())
}

fn axpy(base: &[f64], scale: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + scale * d).collect()
}

/// One unguarded step of size `dt`.
fn propose(state: &FlowState, dt: f64, scheme: Scheme) -> Vec<f64> {
    let x = &state.x.values;
    let f = |v: &[f64]| velocity_of(v, &state.y, &state.params);
    match scheme {
        Scheme::Euler => axpy(x, dt, &f(x)),
        Scheme::Rk4 => {
            let k1 = f(x);
            let k2 = f(&axpy(x, 0.5 * dt, &k1));
            let k3 = f(&axpy(x, 0.5 * dt, &k2));
            let k4 = f(&axpy(x, dt, &k3));
            x.iter()
                .enumerate()
                .map(|(j, v)| v + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                .collect()
        }
    }
}

/// Accepted step: the new state and the step size actually used.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FlowState,
    pub dt: f64,
    pub rejections: usize,
}

const MAX_HALVINGS: usize = 30;

/// Advances by `dt`; with `monotone_guard`, a proposal that breaks the ordering of `X`
/// is rejected and retried with half the step, at most 30 times.
pub fn step(state: &FlowState, dt: f64, scheme: Scheme, monotone_guard: bool) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(invalid("step size must be positive"));
    }
    let mut h = dt;
    for rejections in 0..=MAX_HALVINGS {
        let values = propose(state, h, scheme);
        let ok = values.iter().all(|v| v.is_finite()) && (!monotone_guard || is_nondecreasing(&values));
        if ok {
            let mut next = state.clone();
            next.t = state.t + h;
            next.x.values = values;
            return Ok(StepOutcome { state: next, dt: h, rejections });
        }
        h *= 0.5;
    }
    Err(Error::MonotonicityLost { t: state.t, dt: h })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSample {
    pub state: FlowState,
    pub energy: EnergyReport,
    pub dissipation: f64,
}

impl FlowSample {
    fn of(state: FlowState) -> Result<Self> {
        let energy = flow_energy(&state);
        let dissipation = dissipation(&state)?;
        Ok(Self { state, energy, dissipation })
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn mean(&self) -> f64 {
        self.state.x.mean()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<FlowSample>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub reached_steady: bool,
}

impl Trajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trajectories hold the initial sample")
    }

    /// CSV `t,energy,dissipation,w2_to_target,mean`; the W2 column is empty without a target.
    pub fn write_csv<W: Write>(&self, mut w: W, target: Option<&PseudoInverse1D>) -> Result<()> {
        let io = |e: std::io::Error| invalid(format!("trace write: {e}"));
        writeln!(w, "t,energy,dissipation,w2_to_target,mean").map_err(io)?;
        for s in &self.samples {
            let w2 = match target {
                Some(t) => format!("{:?}", wasserstein_p(&normalized(&s.state.x), &normalized(t), 2.0)?),
                None => String::new(),
            };
            writeln!(
                w,
                "{:?},{:?},{:?},{},{:?}",
                s.t(),
                s.energy.total,
                s.dissipation,
                w2,
                s.mean()
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

fn normalized(x: &PseudoInverse1D) -> PseudoInverse1D {
    PseudoInverse1D {
        values: x.values.clone(),
        mass: 1.0,
    }
}

/// Integrates from `state0.t` to `cfg.t_end`, recording samples on the configured spacing.
pub fn integrate(state0: &FlowState, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut samples = vec![FlowSample::of(state0.clone())?];
    let mut state = state0.clone();
    let mut accepted = 0;
    let mut rejected = 0;
    let mut reached_steady = false;
    let t0 = state0.t;
    let mut next_sample_idx = 1usize;
    let next_sample = |k: usize| match cfg.sample_every {
        Some(s) => (t0 + k as f64 * s).min(cfg.t_end),
        None => cfg.t_end,
    };
    while state.t < cfg.t_end {
        let target = next_sample(next_sample_idx);
        let remaining = target - state.t;
        let dt = cfg.dt0.min(remaining);
        let out = step(&state, dt, cfg.scheme, cfg.monotone_guard)?;
        rejected += out.rejections;
        accepted += 1;
        state = out.state;
        if (target - state.t).abs() <= 1e-12 * target.abs().max(1.0) {
            state.t = target;
        }
        let max_abs = state.x.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max_abs > cfg.max_abs {
            return Err(Error::Blowup {
                t: state.t,
                bound: cfg.max_abs,
                max_abs,
            });
        }
        let at_sample = state.t >= target;
        let speed = rhs(&state)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let steady = cfg.tol_steady > 0.0 && speed <= cfg.tol_steady;
        if at_sample || cfg.sample_every.is_none() || steady || state.t >= cfg.t_end {
            samples.push(FlowSample::of(state.clone())?);
            if at_sample {
                next_sample_idx += 1;
            }
        }
        if steady {
            reached_steady = true;
            break;
        }
    }
    Ok(Trajectory {
        samples,
        accepted_steps: accepted,
        rejected_steps: rejected,
        reached_steady,
    })
}

/// `V'(x) = (psi_a' * omega)(x)`, exact for the piecewise-constant density.
fn potential_slope(omega: &GridDensity1D, q_a: f64, x: f64) -> f64 {
    let dx = omega.dx();
    omega
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .map(|(i, c)| {
            let lo = omega.x_min + i as f64 * dx;
            c * (psi_1d(q_a, x - lo) - psi_1d(q_a, x - lo - dx))
        })
        .sum()
}

/// Leftmost `x` in `[lo, hi]` where the nondecreasing `f` passes `level`
/// (`f(x) > level`, or `>=` when `inclusive`).
fn leftmost_crossing(f: impl Fn(f64) -> f64, level: f64, inclusive: bool, mut lo: f64, mut hi: f64) -> f64 {
    let passes = |v: f64| if inclusive { v >= level } else { v > level };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if passes(f(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Steady state of the flow with `q_r = 1`: the mass-one cut-off of `1/2 psi_a'' * omega`
/// around the zero of `psi_a' * omega`; for `q_a = 1` this is `omega` restricted to the
/// window of mass one centered at its median.
pub fn steady_state_qr1(omega: &GridDensity1D, q_a: f64) -> Result<GridDensity1D> {
    if !(1.0..=2.0).contains(&q_a) {
        return Err(invalid(format!("q_a = {q_a} outside [1, 2]")));
    }
    let m = omega.mass();
    if !(m > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    if q_a == 1.0 && m < 1.0 {
        return Err(Error::NoSteadyState(m));
    }
    let f = |x: f64| potential_slope(omega, q_a, x);
    // support of the datum
    let dx = omega.dx();
    let first = omega.cells.iter().position(|c| *c > 0.0).unwrap_or(0);
    let last = omega.cells.iter().rposition(|c| *c > 0.0).unwrap_or(omega.len() - 1);
    let (s_lo, s_hi) = (omega.x_min + first as f64 * dx, omega.x_min + (last + 1) as f64 * dx);
    let (mut lo, mut hi) = (s_lo, s_hi);
    if q_a > 1.0 {
        let mut pad = s_hi - s_lo;
        while f(lo) > -1.0 {
            lo -= pad;
            pad *= 2.0;
        }
        pad = s_hi - s_lo;
        while f(hi) < 1.0 {
            hi += pad;
            pad *= 2.0;
        }
    }
    let a = if f(lo) > -1.0 { lo } else { leftmost_crossing(f, -1.0, false, lo, hi) };
    let b = if f(lo) >= 1.0 { lo } else { leftmost_crossing(f, 1.0, true, lo, hi) };
    if !(b > a) {
        return Err(invalid("steady state has empty support"));
    }
    let cdf = |x: f64| (0.5 * (f(x) + 1.0)).clamp(0.0, 1.0);
    let cells_out = omega.len();
    let h = (b - a) / cells_out as f64;
    let cells = (0..cells_out)
        .map(|i| {
            let l = a + i as f64 * h;
            let r = if i + 1 == cells_out { b } else { l + h };
            ((cdf(r) - cdf(l)) / h).max(0.0)
        })
        .collect();
    GridDensity1D::new(a, b, cells)
}

/// Density `1/2 (psi_a'' * omega)(x)` for `q_a > 1`, exact for the piecewise-constant datum.
pub fn half_second_derivative(omega: &GridDensity1D, q_a: f64, x: f64) -> f64 {
    let dx = omega.dx();
    0.5 * omega
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lo = omega.x_min + i as f64 * dx;
            c * (psi_prime_1d(q_a, x - lo) - psi_prime_1d(q_a, x - lo - dx))
        })
        .sum::<f64>()
}

/// Parameter regime of the asymptotic analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `q_r = 1`: convergence in W2 to the explicit steady state.
    SteadyStateQr1,
    /// `q_r = 1 = q_a` with datum mass below one: tails escape, no steady state.
    MassEscapes,
    /// `q_a = q_r = 2`: rigid profile, exponentially relaxing mean.
    TravelingWave,
    /// `1 < q_r < 2`, `q_r < q_a < 2`: convergence along a subsequence.
    SubsequenceStrongerAttraction,
    /// `1 < q_a = q_r < 4/3`: convergence along a subsequence.
    SubsequenceSymmetric,
    /// No convergence statement is available.
    Open,
}

pub fn classify(params: &PowerKernelParams, datum_mass: f64) -> Regime {
    let (qa, qr) = (params.q_a, params.q_r);
    if qr == 1.0 {
        if qa == 1.0 && datum_mass < 1.0 {
            Regime::MassEscapes
        } else {
            Regime::SteadyStateQr1
        }
    } else if qa == 2.0 && qr == 2.0 {
        Regime::TravelingWave
    } else if qr > 1.0 && qr < 2.0 && qr < qa && qa < 2.0 {
        Regime::SubsequenceStrongerAttraction
    } else if qa == qr && qa > 1.0 && qa < 4.0 / 3.0 {
        Regime::SubsequenceSymmetric
    } else {
        Regime::Open
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub regime: Regime,
    /// `(t, W2(mu(t), steady state))` for the `q_r = 1` regime.
    pub w2_to_target: Option<Vec<(f64, f64)>>,
    /// Rate `r` of `|rho_mu(t) - rho_omega| ~ exp(-r t)` in the traveling-wave regime.
    pub fitted_rate: Option<f64>,
    pub energy_monotone: bool,
    pub energy_drop: f64,
    /// Trapezoidal `int D dt` over the trajectory.
    pub dissipation_integral: f64,
    /// Fraction of quantile nodes farther than `max(1, support length)` from the datum's support.
    pub escaped_mass: f64,
}

fn fit_rate(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, g)| g.abs() > 1e-10)
        .map(|(t, g)| (*t, g.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|(t, l)| (t - mt) * (l - ml)).sum();
    let var: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    (var > 0.0).then(|| -cov / var)
}

/// Long-time diagnostics of a trajectory. The W2 series needs the datum as a grid
/// density and is skipped without one.
pub fn diagnose_asymptotics(traj: &Trajectory, omega: Option<&GridDensity1D>) -> Result<AsymptoticReport> {
    let first = &traj.samples[0];
    let params = first.state.params;
    let regime = classify(&params, first.state.y.mass);
    let m = first.state.m();

    let w2_to_target = if let (Regime::SteadyStateQr1, Some(omega)) = (regime, omega) {
        let mut target = pseudo_inverse(&steady_state_qr1(omega, params.q_a)?, m)?;
        target.mass = 1.0;
        let series = traj
            .samples
            .iter()
            .map(|s| Ok((s.t(), wasserstein_p(&normalized(&s.state.x), &target, 2.0)?)))
            .collect::<Result<Vec<_>>>()?;
        Some(series)
    } else {
        None
    };

    let fitted_rate = if regime == Regime::TravelingWave {
        let gaps: Vec<(f64, f64)> = traj
            .samples
            .iter()
            .map(|s| (s.t(), s.state.x.mean() - s.state.y.mean()))
            .collect();
        fit_rate(&gaps)
    } else {
        None
    };

    let energies: Vec<f64> = traj.samples.iter().map(|s| s.energy.total).collect();
    let energy_monotone = energies.windows(2).all(|w| w[1] <= w[0] + 1e-8);
    let dissipation_integral = traj
        .samples
        .windows(2)
        .map(|w| 0.5 * (w[0].dissipation + w[1].dissipation) * (w[1].t() - w[0].t()))
        .sum();

    let y = &first.state.y.values;
    let (y_min, y_max) = (y[0], y[y.len() - 1]);
    let width = (y_max - y_min).max(1.0);
    let last = &traj.last().state.x.values;
    let outside = last
        .iter()
        .filter(|x| **x < y_min - width || **x > y_max + width)
        .count();

    Ok(AsymptoticReport {
        regime,
        w2_to_target,
        fitted_rate,
        energy_monotone,
        energy_drop: energies[0] - energies[energies.len() - 1],
        dissipation_integral,
        escaped_mass: outside as f64 / last.len() as f64,
    })
}
