//! Measure representations and the 1D quantile machinery.
//!
//! Three representations are used throughout the crate:
//!
//! | Type | Meaning |
//! |------|---------|
//! | [`DiscreteMeasure`] | weighted atoms in R^d |
//! | [`GridDensity1D`] | piecewise-constant density on a uniform 1D grid |
//! | [`PseudoInverse1D`] | quantile function sampled at the midpoints `z_j = (j - 1/2)/M` |
//!
//! In one dimension the Wasserstein distance between two probability measures
//! is the `L^p[0,1]` distance of their pseudo-inverses, which is what
//! [`wasserstein_p`] evaluates.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Read access to a finite weighted point set.
pub trait WeightedPoints {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn point(&self, i: usize) -> &[f64];
    fn weight(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mass(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i)).sum()
    }
}

/// Weighted atoms `sum_i w_i delta_{x_i}` in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major coordinates, `points.len() == dim * weights.len()`.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if points.len() != dim * weights.len() {
            return Err(invalid(format!(
                "{} coordinates do not describe {} points in dimension {}",
                points.len(),
                weights.len(),
                dim
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        Ok(Self { dim, points, weights })
    }

    /// 1D atoms with the given weights.
    pub fn from_1d(xs: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec(), weights.to_vec())
    }

    /// Equal-weight 1D atoms with total mass 1.
    pub fn uniform_1d(xs: &[f64]) -> Result<Self> {
        let w = 1.0 / xs.len().max(1) as f64;
        Self::new(1, xs.to_vec(), vec![w; xs.len()])
    }

    /// Equal-weight atoms in R^d with total mass 1, points row-major.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len().checked_div(dim).unwrap_or(0);
        let w = 1.0 / n.max(1) as f64;
        Self::new(dim, points, vec![w; n])
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Push-forward under `x -> scale * x + shift`.
    pub fn affine(&self, scale: f64, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch(shift.len(), self.dim));
        }
        let points = self
            .points
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(x, c)| scale * x + c))
            .collect();
        Self::new(self.dim, points, self.weights.clone())
    }

    /// Same atoms, weights rescaled to total mass `mass`.
    pub fn with_mass(&self, mass: f64) -> Result<Self> {
        let s = mass / self.mass();
        Self::new(
            self.dim,
            self.points.clone(),
            self.weights.iter().map(|w| w * s).collect(),
        )
    }

    /// Reads the CSV measure format: header `x0[,x1,...],w`, one point per row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| invalid(format!("csv header: {e}")))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let dim = cols.len().saturating_sub(1);
        if dim == 0 || cols.last() != Some(&"w") {
            return Err(invalid("csv header must be x0[,x1,...],w"));
        }
        for (k, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{k}") {
                return Err(invalid(format!("unexpected csv column {c:?}, want x{k}")));
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| invalid(format!("csv row {}: {e}", row + 1)))?;
            if rec.len() != dim + 1 {
                return Err(invalid(format!("csv row {} has {} fields", row + 1, rec.len())));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| invalid(format!("csv row {}: bad number {s:?}", row + 1)))
            };
            for field in rec.iter().take(dim) {
                points.push(parse(field)?);
            }
            weights.push(parse(&rec[dim])?);
        }
        Self::new(dim, points, weights)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| invalid(format!("csv write: {e}"));
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.push("w".into());
        wtr.write_record(&header).map_err(io)?;
        for (p, w) in self.points.chunks(self.dim).zip(&self.weights) {
            let mut rec: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
            rec.push(format!("{w:?}"));
            wtr.write_record(&rec).map_err(io)?;
        }
        wtr.flush().map_err(|e| invalid(format!("csv write: {e}")))
    }
}

impl WeightedPoints for DiscreteMeasure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// Piecewise-constant nonnegative density on `[x_min, x_max]` with `cells.len()` equal cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity1D {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: Vec<f64>,
}

impl GridDensity1D {
    pub fn new(x_min: f64, x_max: f64, cells: Vec<f64>) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid(format!("grid bounds [{x_min}, {x_max}] are not an interval")));
        }
        if cells.is_empty() {
            return Err(invalid("grid needs at least one cell"));
        }
        if cells.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(invalid("grid density must be finite and nonnegative"));
        }
        let g = Self { x_min, x_max, cells };
        if !(g.mass() > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        Ok(g)
    }

    /// Constant density `height` on `[a, b]`, resolved with `m` cells.
    pub fn uniform(a: f64, b: f64, height: f64, m: usize) -> Result<Self> {
        Self::new(a, b, vec![height; m])
    }

    /// Sum of indicator bumps `(lo, hi, height)` averaged exactly over each cell.
    pub fn from_boxes(x_min: f64, x_max: f64, m: usize, boxes: &[(f64, f64, f64)]) -> Result<Self> {
        let dx = (x_max - x_min) / m as f64;
        let cells = (0..m)
            .map(|i| {
                let lo = x_min + i as f64 * dx;
                let hi = lo + dx;
                boxes
                    .iter()
                    .map(|&(a, b, h)| h * (hi.min(b) - lo.max(a)).max(0.0))
                    .sum::<f64>()
                    / dx
            })
            .collect();
        Self::new(x_min, x_max, cells)
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(x_min: f64, x_max: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = (x_max - x_min) / m as f64;
        let cells = (0..m).map(|i| f(x_min + (i as f64 + 0.5) * dx).max(0.0)).collect();
        Self::new(x_min, x_max, cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells.len() as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().sum::<f64>() * self.dx()
    }

    pub fn normalized(&self) -> Self {
        let m = self.mass();
        Self {
            x_min: self.x_min,
            x_max: self.x_max,
            cells: self.cells.iter().map(|c| c / m).collect(),
        }
    }

    /// Midpoint atoms carrying each cell's mass; zero-mass cells are dropped.
    pub fn to_discrete(&self) -> DiscreteMeasure {
        let dx = self.dx();
        let (xs, ws): (Vec<f64>, Vec<f64>) = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0.0)
            .map(|(i, c)| (self.cell_center(i), c * dx))
            .unzip();
        DiscreteMeasure {
            dim: 1,
            points: xs,
            weights: ws,
        }
    }

    /// Density value at `x` (cells are closed on the left).
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.x_min || x >= self.x_max {
            return 0.0;
        }
        let i = ((x - self.x_min) / self.dx()) as usize;
        self.cells[i.min(self.cells.len() - 1)]
    }

    /// Pointwise variation of the piecewise-constant density, including the jumps from and to 0.
    pub fn total_variation(&self) -> f64 {
        let interior: f64 = self.cells.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        interior + self.cells[0] + self.cells[self.cells.len() - 1]
    }

    fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..=self.cells.len()).map(move |i| self.x_min + i as f64 * dx)
    }
}

/// `int |f - g| dx` for two grid densities, evaluated exactly on the common refinement.
pub fn l1_distance(a: &GridDensity1D, b: &GridDensity1D) -> f64 {
    let mut knots: Vec<f64> = a.breakpoints().chain(b.breakpoints()).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (a.value_at(mid) - b.value_at(mid)).abs() * (w[1] - w[0])
        })
        .sum()
}

/// Pseudo-inverse `X(z_j)` of a normalized 1D measure at `z_j = (j - 1/2)/M`, with the
/// original mass recorded separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoInverse1D {
    pub values: Vec<f64>,
    pub mass: f64,
}

impl PseudoInverse1D {
    pub fn new(values: Vec<f64>, mass: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("pseudo-inverse needs at least one node"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pseudo-inverse values must be finite"));
        }
        if !is_nondecreasing(&values) {
            return Err(invalid("pseudo-inverse values must be nondecreasing"));
        }
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        Ok(Self { values, mass })
    }

    /// Constant pseudo-inverse, i.e. a point mass at `x`.
    pub fn constant(x: f64, m: usize) -> Self {
        Self {
            values: vec![x; m],
            mass: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, j: usize) -> f64 {
        quantile_node(j, self.values.len())
    }

    /// First moment of the normalized measure.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `int f dmu` through the substitution `int f(X(z)) dz`, scaled by the mass.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.mass * self.values.iter().map(|&x| f(x)).sum::<f64>() / self.values.len() as f64
    }

    /// Equal-weight atoms at the nodes carrying the recorded mass.
    pub fn to_discrete(&self) -> DiscreteMeasure {
        let w = self.mass / self.values.len() as f64;
        DiscreteMeasure {
            dim: 1,
            points: self.values.clone(),
            weights: vec![w; self.values.len()],
        }
    }

    /// Normalized CDF of the measure whose quantile function interpolates the nodes
    /// linearly, extended by half a cell at both ends. Flat stretches of the quantile
    /// function become jumps, resolved right-continuously.
    pub fn interpolated_cdf(&self, x: f64) -> f64 {
        let v = &self.values;
        let m = v.len();
        let h = 1.0 / m as f64;
        let (left, right) = if m == 1 {
            (v[0], v[0])
        } else {
            (
                v[0] - 0.5 * (v[1] - v[0]),
                v[m - 1] + 0.5 * (v[m - 1] - v[m - 2]),
            )
        };
        if x < left {
            return 0.0;
        }
        if x >= right {
            return 1.0;
        }
        // knots (z, X): (0, left), (z_1, v_1), ..., (z_M, v_M), (1, right)
        let knot = |k: usize| -> (f64, f64) {
            match k {
                0 => (0.0, left),
                k if k == m + 1 => (1.0, right),
                k => ((k as f64 - 0.5) * h, v[k - 1]),
            }
        };
        // last knot with X <= x
        let (mut lo, mut hi) = (0usize, m + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if knot(mid).1 <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (z0, x0) = knot(lo);
        let (z1, x1) = knot(hi);
        if x1 > x0 {
            z0 + (z1 - z0) * (x - x0) / (x1 - x0)
        } else {
            z0
        }
    }
}

/// Midpoint quantile node `z_j = (j + 1/2)/M` for zero-based `j`.
pub fn quantile_node(j: usize, m: usize) -> f64 {
    (j as f64 + 0.5) / m as f64
}

pub fn is_nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// One-dimensional measures that expose a CDF and a pseudo-inverse.
pub trait Measure1D {
    /// `mu((-inf, x])`, unnormalized.
    fn cdf(&self, x: f64) -> Result<f64>;

    /// Quantile grid of the normalized measure.
    fn pseudo_inverse(&self, m: usize) -> Result<PseudoInverse1D>;
}

impl Measure1D for DiscreteMeasure {
    fn cdf(&self, x: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional);
        }
        Ok(self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| **p <= x)
            .map(|(_, w)| w)
            .sum())
    }

    fn pseudo_inverse(&self, m: usize) -> Result<PseudoInverse1D> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional);
        }
        if m == 0 {
            return Err(invalid("quantile grid needs M >= 1"));
        }
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let mut atoms: Vec<(f64, f64)> = self
            .points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .filter(|(_, w)| *w > 0.0)
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (_, w) in &atoms {
            acc += w;
            cum.push(acc / mass);
        }
        // guard the last cumulative value against rounding below 1
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        let values = (0..m)
            .map(|j| {
                let z = quantile_node(j, m);
                // first atom whose cumulative mass strictly exceeds z
                let k = cum.partition_point(|c| *c <= z);
                atoms[k.min(atoms.len() - 1)].0
            })
            .collect();
        Ok(PseudoInverse1D { values, mass })
    }
}

impl Measure1D for GridDensity1D {
    fn cdf(&self, x: f64) -> Result<f64> {
        if x <= self.x_min {
            return Ok(0.0);
        }
        let dx = self.dx();
        let mut acc = 0.0;
        for (i, c) in self.cells.iter().enumerate() {
            let lo = self.x_min + i as f64 * dx;
            if x >= lo + dx {
                acc += c * dx;
            } else {
                acc += c * (x - lo);
                break;
            }
        }
        Ok(acc)
    }

    fn pseudo_inverse(&self, m: usize) -> Result<PseudoInverse1D> {
        if m == 0 {
            return Err(invalid("quantile grid needs M >= 1"));
        }
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let dx = self.dx();
        let probs: Vec<f64> = self.cells.iter().map(|c| c * dx / mass).collect();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        let values = (0..m)
            .map(|j| {
                let z = quantile_node(j, m);
                let i = cum.partition_point(|c| *c <= z).min(cum.len() - 1);
                let before = if i == 0 { 0.0 } else { cum[i - 1] };
                let lo = self.x_min + i as f64 * dx;
                let frac = if probs[i] > 0.0 {
                    ((z - before) / probs[i]).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                lo + frac * dx
            })
            .collect::<Vec<f64>>();
        // rounding in the cumulative sums may break monotonicity by an ulp
        let mut values = values;
        for j in 1..values.len() {
            if values[j] < values[j - 1] {
                values[j] = values[j - 1];
            }
        }
        Ok(PseudoInverse1D { values, mass })
    }
}

pub fn pseudo_inverse<T: Measure1D + ?Sized>(measure: &T, m: usize) -> Result<PseudoInverse1D> {
    measure.pseudo_inverse(m)
}

pub fn cdf_eval<T: Measure1D + ?Sized>(measure: &T, x: f64) -> Result<f64> {
    measure.cdf(x)
}

/// `W_p` between probability measures via their pseudo-inverses; `p = f64::INFINITY`
/// gives the maximum over the grid, a lower bound of the true supremum.
pub fn wasserstein_p(a: &PseudoInverse1D, b: &PseudoInverse1D, p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(a.len(), b.len()));
    }
    for m in [a.mass, b.mass] {
        if (m - 1.0).abs() > 1e-9 {
            return Err(Error::NotProbability(m));
        }
    }
    if !(p >= 1.0) {
        return Err(invalid(format!("Wasserstein order must be >= 1, got {p}")));
    }
    let diffs = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs());
    if p.is_infinite() {
        return Ok(diffs.fold(0.0, f64::max));
    }
    let n = a.len() as f64;
    let s: f64 = if p == 1.0 {
        diffs.sum()
    } else if p == 2.0 {
        diffs.map(|d| d * d).sum()
    } else {
        diffs.map(|d| d.powf(p)).sum()
    };
    Ok((s / n).powf(1.0 / p))
}

/// Normalized CDF in a form that can be integrated exactly.
#[derive(Debug, Clone)]
pub struct CdfProfile {
    xs: Vec<f64>,
    /// Normalized CDF right after each breakpoint.
    cum: Vec<f64>,
    /// Linear between breakpoints (grid densities) or constant (atoms).
    linear: bool,
}

impl CdfProfile {
    fn right(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|p| *p <= x);
        if k == 0 {
            return 0.0;
        }
        if !self.linear || k == self.xs.len() {
            return self.cum[k - 1];
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (c0, c1) = (self.cum[k - 1], self.cum[k]);
        c0 + (c1 - c0) * (x - x0) / (x1 - x0)
    }

    fn left(&self, x: f64) -> f64 {
        if self.linear {
            return self.right(x);
        }
        let k = self.xs.partition_point(|p| *p < x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }
}

/// One-dimensional measures whose normalized CDF is piecewise linear.
pub trait PiecewiseCdf {
    fn cdf_profile(&self) -> Result<CdfProfile>;
}

impl PiecewiseCdf for DiscreteMeasure {
    fn cdf_profile(&self) -> Result<CdfProfile> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional);
        }
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let mut atoms: Vec<(f64, f64)> = self.points.iter().copied().zip(self.weights.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut cum: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (x, w) in atoms {
            acc += w / mass;
            if xs.last() == Some(&x) {
                *cum.last_mut().unwrap() = acc;
            } else {
                xs.push(x);
                cum.push(acc);
            }
        }
        Ok(CdfProfile { xs, cum, linear: false })
    }
}

impl PiecewiseCdf for GridDensity1D {
    fn cdf_profile(&self) -> Result<CdfProfile> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let dx = self.dx();
        let mut xs = Vec::with_capacity(self.len() + 1);
        let mut cum = Vec::with_capacity(self.len() + 1);
        xs.push(self.x_min);
        cum.push(0.0);
        let mut acc = 0.0;
        for (i, c) in self.cells.iter().enumerate() {
            acc += c * dx / mass;
            xs.push(if i + 1 == self.len() { self.x_max } else { self.x_min + (i + 1) as f64 * dx });
            cum.push(acc);
        }
        Ok(CdfProfile { xs, cum, linear: true })
    }
}

/// Exact `W_1 = int |F_a - F_b| dx` between the normalized measures.
pub fn wasserstein_1_exact<A: PiecewiseCdf + ?Sized, B: PiecewiseCdf + ?Sized>(a: &A, b: &B) -> Result<f64> {
    let (pa, pb) = (a.cdf_profile()?, b.cdf_profile()?);
    let mut breaks: Vec<f64> = pa.xs.iter().chain(&pb.xs).copied().collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let d0 = pa.right(x0) - pb.right(x0);
        let d1 = pa.left(x1) - pb.left(x1);
        let len = x1 - x0;
        total += if d0 * d1 >= 0.0 {
            0.5 * (d0.abs() + d1.abs()) * len
        } else {
            // the linear difference crosses zero inside the interval
            0.5 * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs()) * len
        };
    }
    Ok(total)
}

/// Measures with an `r`-th absolute moment.
pub trait Moment {
    fn moment(&self, r: f64) -> Result<f64>;
}

fn check_order(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("moment order must be >= 0, got {r}")))
    }
}

impl Moment for DiscreteMeasure {
    fn moment(&self, r: f64) -> Result<f64> {
        check_order(r)?;
        Ok((0..self.len())
            .map(|i| {
                let norm = self.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                self.weight(i) * norm.powf(r)
            })
            .sum())
    }
}

impl Moment for GridDensity1D {
    fn moment(&self, r: f64) -> Result<f64> {
        check_order(r)?;
        let dx = self.dx();
        Ok(self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| c * dx * self.cell_center(i).abs().powf(r))
            .sum())
    }
}

impl Moment for PseudoInverse1D {
    fn moment(&self, r: f64) -> Result<f64> {
        check_order(r)?;
        Ok(self.integrate(|x| x.abs().powf(r)))
    }
}

pub fn moment<T: Moment + ?Sized>(measure: &T, r: f64) -> Result<f64> {
    measure.moment(r)
}
