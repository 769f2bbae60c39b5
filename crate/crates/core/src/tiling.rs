//! Equal-mass nested quantile tilings of a density on a box in R^d.
//!
//! With `n = floor(N^{1/d})` and `N = n^{d-m} (n+1)^m + l`, the first `m` axes are
//! cut into `n + 1` slabs, the following axes into `n`, and along the last axis
//! the first `l` branches (in lexicographic order) get one extra tile. Every cut
//! splits the current box so that each child carries mass proportional to the
//! number of tiles below it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::ParticleSystem;
use crate::error::{invalid, Error, Result};
use crate::measures::GridDensity1D;

/// Piecewise-constant density on a uniform grid over the box `[lo, hi]`,
/// stored in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensityNd {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    pub cells: Vec<f64>,
}

impl GridDensityNd {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, cells: Vec<f64>) -> Result<Self> {
        let d = shape.len();
        if d == 0 || lo.len() != d || hi.len() != d {
            return Err(invalid("box bounds and shape must share the dimension"));
        }
        if shape.contains(&0) {
            return Err(invalid("grid shape entries must be positive"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(invalid("grid box needs lo < hi on every axis"));
        }
        let count: usize = shape.iter().product();
        if cells.len() != count {
            return Err(Error::GridMismatch(cells.len(), count));
        }
        if cells.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        Ok(Self { lo, hi, shape, cells })
    }

    /// Constant density `1 / vol` on the box.
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let count = shape.iter().product();
        Self::new(lo, hi, shape, vec![1.0 / vol; count])
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = shape.len();
        let count: usize = shape.iter().product();
        let mut cells = Vec::with_capacity(count);
        let mut x = vec![0.0; d];
        for flat in 0..count {
            let idx = unravel(flat, &shape);
            for k in 0..d {
                x[k] = lo[k] + (idx[k] as f64 + 0.5) * (hi[k] - lo[k]) / shape[k] as f64;
            }
            cells.push(f(&x));
        }
        Self::new(lo, hi, shape, cells)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn spacing(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / self.shape[k] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().sum::<f64>() * self.cell_volume()
    }

    fn cell_lo(&self, k: usize, i: usize) -> f64 {
        self.lo[k] + i as f64 * self.spacing(k)
    }

    fn cell_hi(&self, k: usize, i: usize) -> f64 {
        if i + 1 == self.shape[k] {
            self.hi[k]
        } else {
            self.lo[k] + (i + 1) as f64 * self.spacing(k)
        }
    }

    /// Overlap length of cell `i` along axis `k` with `[a, b]`.
    fn overlap(&self, k: usize, i: usize, a: f64, b: f64) -> f64 {
        (self.cell_hi(k, i).min(b) - self.cell_lo(k, i).max(a)).max(0.0)
    }

    /// Index range of the cells along axis `k` that meet `[a, b]`.
    fn cell_range(&self, k: usize, a: f64, b: f64) -> std::ops::Range<usize> {
        let h = self.spacing(k);
        let n = self.shape[k];
        let first = (((a - self.lo[k]) / h).floor().max(0.0) as usize).min(n - 1);
        let last = (((b - self.lo[k]) / h).ceil().max(0.0) as usize).clamp(first + 1, n);
        first..last
    }

    /// Mass per cell slab along axis `axis` inside the box; the CDF along that axis is
    /// linear within each slab.
    fn slab_masses(&self, bx: &TileBox, axis: usize) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.shape[axis]];
        let ranges: Vec<_> = (0..d).map(|k| self.cell_range(k, bx.lo[k], bx.hi[k])).collect();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return out;
        }
        loop {
            let mut weight = 1.0;
            for k in 0..d {
                if k != axis {
                    weight *= self.overlap(k, idx[k], bx.lo[k], bx.hi[k]);
                }
            }
            if weight > 0.0 {
                let c = self.cells[ravel(&idx, &self.shape)];
                out[idx[axis]] += c * weight * self.overlap(axis, idx[axis], bx.lo[axis], bx.hi[axis]);
            }
            if !advance(&mut idx, &ranges) {
                break;
            }
        }
        out
    }

    /// Mass and center of mass of the box.
    fn box_moments(&self, bx: &TileBox) -> (f64, Vec<f64>) {
        let d = self.dim();
        let ranges: Vec<_> = (0..d).map(|k| self.cell_range(k, bx.lo[k], bx.hi[k])).collect();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        let mut mass = 0.0;
        let mut first = vec![0.0; d];
        loop {
            let c = self.cells[ravel(&idx, &self.shape)];
            let mut vol = 1.0;
            for k in 0..d {
                vol *= self.overlap(k, idx[k], bx.lo[k], bx.hi[k]);
            }
            let m = c * vol;
            if m > 0.0 {
                mass += m;
                for (k, f) in first.iter_mut().enumerate() {
                    let a = self.cell_lo(k, idx[k]).max(bx.lo[k]);
                    let b = self.cell_hi(k, idx[k]).min(bx.hi[k]);
                    *f += m * 0.5 * (a + b);
                }
            }
            if !advance(&mut idx, &ranges) {
                break;
            }
        }
        let center = if mass > 0.0 {
            first.iter().map(|f| f / mass).collect()
        } else {
            // empty tile: fall back to the geometric center
            bx.lo.iter().zip(&bx.hi).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        (mass, center)
    }

    /// Mass of the box.
    pub fn box_mass(&self, bx: &TileBox) -> f64 {
        self.box_moments(bx).0
    }
}

impl From<&GridDensity1D> for GridDensityNd {
    fn from(g: &GridDensity1D) -> Self {
        Self {
            lo: vec![g.x_min],
            hi: vec![g.x_max],
            shape: vec![g.len()],
            cells: g.cells.clone(),
        }
    }
}

fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// Odometer step over a product of ranges; false once exhausted.
fn advance(idx: &mut [usize], ranges: &[std::ops::Range<usize>]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < ranges[k].end {
            return true;
        }
        idx[k] = ranges[k].start;
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TileBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    pub dim: usize,
    /// Multi-index of each tile, zero-based.
    pub index_set: Vec<Vec<usize>>,
    pub boxes: Vec<TileBox>,
    pub points: Vec<Vec<f64>>,
    /// Mass of each tile under the normalized density.
    pub masses: Vec<f64>,
}

/// Slice-count plan `N = n^{d-m} (n+1)^m + l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n_tilde: usize,
    pub m: usize,
    pub l: usize,
}

fn ipow(b: usize, e: usize) -> usize {
    (0..e).fold(1usize, |acc, _| acc.saturating_mul(b))
}

pub fn decompose(n: usize, d: usize) -> Result<Decomposition> {
    if n == 0 {
        return Err(invalid("a tiling needs N >= 1"));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    // integer d-th root, corrected for floating-point error
    let mut nt = (n as f64).powf(1.0 / d as f64).round() as usize;
    while ipow(nt, d) > n {
        nt -= 1;
    }
    while ipow(nt + 1, d) <= n {
        nt += 1;
    }
    let m = (0..d)
        .rev()
        .find(|&m| ipow(nt, d - m) * ipow(nt + 1, m) <= n)
        .unwrap_or(0);
    let p = ipow(nt, d - m) * ipow(nt + 1, m);
    Ok(Decomposition { n_tilde: nt, m, l: n - p })
}

impl Decomposition {
    /// Number of children of the node at depth `k` whose prefix has lexicographic rank `rank`.
    fn children(&self, d: usize, k: usize, rank: usize) -> usize {
        if k + 1 == d {
            self.n_tilde + usize::from(rank < self.l)
        } else if k < self.m {
            self.n_tilde + 1
        } else {
            self.n_tilde
        }
    }

    /// Number of leaves below a node at depth `k` (its prefix has length `k`) with rank `rank`.
    fn leaves(&self, d: usize, k: usize, rank: usize) -> usize {
        if k == d {
            return 1;
        }
        if k + 1 == d {
            return self.children(d, k, rank);
        }
        let c = self.children(d, k, rank);
        (0..c).map(|i| self.leaves(d, k + 1, rank * c + i)).sum()
    }
}

/// Leftmost `t` in the slab grid with normalized cumulative mass `target`.
fn invert_slabs(g: &GridDensityNd, axis: usize, slabs: &[f64], a: f64, b: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return a;
    }
    let mut acc = 0.0;
    for (i, s) in slabs.iter().enumerate() {
        if *s <= 0.0 {
            continue;
        }
        if acc + s >= target {
            let lo = g.cell_lo(axis, i).max(a);
            let hi = g.cell_hi(axis, i).min(b);
            let frac = ((target - acc) / s).clamp(0.0, 1.0);
            return lo + frac * (hi - lo);
        }
        acc += s;
    }
    b
}

struct Builder<'a> {
    g: &'a GridDensityNd,
    plan: Decomposition,
    d: usize,
    out: Tiling,
    total: f64,
}

impl Builder<'_> {
    fn split(&mut self, bx: TileBox, prefix: &mut Vec<usize>, rank: usize) {
        let k = prefix.len();
        if k == self.d {
            let (mass, center) = self.g.box_moments(&bx);
            self.out.index_set.push(prefix.clone());
            self.out.masses.push(mass / self.total);
            self.out.points.push(center);
            self.out.boxes.push(bx);
            return;
        }
        let c = self.plan.children(self.d, k, rank);
        let leaves: Vec<usize> = (0..c).map(|i| self.plan.leaves(self.d, k + 1, rank * c + i)).collect();
        let all: usize = leaves.iter().sum();
        let slabs = self.g.slab_masses(&bx, k);
        let box_mass: f64 = slabs.iter().sum();
        let (a, b) = (bx.lo[k], bx.hi[k]);
        let mut cuts = Vec::with_capacity(c + 1);
        cuts.push(a);
        let mut running = 0usize;
        for l in &leaves[..c - 1] {
            running += l;
            let target = box_mass * running as f64 / all as f64;
            let t = invert_slabs(self.g, k, &slabs, a, b, target);
            cuts.push(t.max(*cuts.last().unwrap()));
        }
        cuts.push(b);
        for i in 0..c {
            let mut child = bx.clone();
            child.lo[k] = cuts[i];
            child.hi[k] = cuts[i + 1];
            prefix.push(i);
            self.split(child, prefix, rank * c + i);
            prefix.pop();
        }
    }
}

/// Nested quantile tiling of `density` into `n` tiles of equal mass; each tile's
/// representative point is its center of mass.
pub fn build_tiling(density: &GridDensityNd, n: usize) -> Result<Tiling> {
    let d = density.dim();
    let plan = decompose(n, d)?;
    let total = density.mass();
    if !(total > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let mut b = Builder {
        g: density,
        plan,
        d,
        out: Tiling {
            dim: d,
            index_set: Vec::with_capacity(n),
            boxes: Vec::with_capacity(n),
            points: Vec::with_capacity(n),
            masses: Vec::with_capacity(n),
        },
        total,
    };
    let root = TileBox {
        lo: density.lo.clone(),
        hi: density.hi.clone(),
    };
    b.split(root, &mut Vec::with_capacity(d), 0);
    Ok(b.out)
}

pub fn particles_from_tiling(t: &Tiling) -> Result<ParticleSystem> {
    ParticleSystem::new(t.dim, t.points.iter().flatten().copied().collect())
}

impl Tiling {
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// JSON `{dim, N, boxes: [{lo, hi}], points}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "N": self.len(),
            "boxes": self.boxes,
            "points": self.points,
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_json()).map_err(|e| invalid(format!("tiling write: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square(m: usize) -> GridDensityNd {
        GridDensityNd::uniform(vec![0.0, 0.0], vec![1.0, 1.0], vec![m, m]).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        assert_eq!(decompose(5, 2).unwrap(), Decomposition { n_tilde: 2, m: 0, l: 1 });
        assert_eq!(decompose(4, 2).unwrap(), Decomposition { n_tilde: 2, m: 0, l: 0 });
        assert_eq!(decompose(7, 2).unwrap(), Decomposition { n_tilde: 2, m: 1, l: 1 });
        assert_eq!(decompose(26, 3).unwrap(), Decomposition { n_tilde: 2, m: 2, l: 8 });
        assert_eq!(decompose(1000, 3).unwrap(), Decomposition { n_tilde: 10, m: 0, l: 0 });
        assert_eq!(decompose(9, 1).unwrap(), Decomposition { n_tilde: 9, m: 0, l: 0 });
        assert!(decompose(0, 2).is_err());
    }

    #[test]
    fn five_tiles_in_the_square() {
        let t = build_tiling(&unit_square(100), 5).unwrap();
        assert_eq!(t.len(), 5);
        let first_cols: Vec<usize> = t.index_set.iter().map(|i| i[0]).collect();
        assert_eq!(first_cols, vec![0, 0, 0, 1, 1]);
        assert!((t.boxes[0].hi[0] - 0.6).abs() < 1e-12);
        assert!((t.boxes[0].hi[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((t.boxes[1].hi[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.boxes[3].hi[1] - 0.5).abs() < 1e-12);
        for m in &t.masses {
            assert!((m - 0.2).abs() < 1e-12);
        }
        for (b, p) in t.boxes.iter().zip(&t.points) {
            assert!(b.contains(p));
        }
    }

    #[test]
    fn quartiles_in_one_dimension() {
        let g = GridDensity1D::uniform(0.0, 1.0, 1.0, 100).unwrap();
        let t = build_tiling(&GridDensityNd::from(&g), 4).unwrap();
        let cuts: Vec<f64> = t.boxes.iter().map(|b| b.hi[0]).collect();
        for (c, e) in cuts.iter().zip([0.25, 0.5, 0.75, 1.0]) {
            assert!((c - e).abs() < 1e-12);
        }
        let pts = particles_from_tiling(&t).unwrap();
        for (p, e) in pts.positions().iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrants() {
        let t = build_tiling(&unit_square(10), 4).unwrap();
        let expected = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
        for (p, e) in t.points.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_tile_is_center_of_mass() {
        let g = GridDensityNd::new(vec![0.0], vec![2.0], vec![2], vec![3.0, 1.0]).unwrap();
        let t = build_tiling(&g, 1).unwrap();
        // masses 3 on [0,1], 1 on [1,2]: center (3 * 0.5 + 1.5) / 4
        assert!((t.points[0][0] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn holes_give_zero_width_tiles_with_full_mass() {
        let g = GridDensityNd::new(vec![0.0], vec![3.0], vec![3], vec![1.0, 0.0, 1.0]).unwrap();
        let t = build_tiling(&g, 2).unwrap();
        // leftmost cut sits at the end of the first block
        assert!((t.boxes[0].hi[0] - 1.0).abs() < 1e-14);
        assert!((t.masses[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn json_layout() {
        let t = build_tiling(&unit_square(4), 4).unwrap();
        let v = t.to_json();
        assert_eq!(v["N"], 4);
        assert_eq!(v["dim"], 2);
        assert_eq!(v["boxes"][0]["lo"][0], 0.0);
        assert_eq!(v["points"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn zero_mass_rejected() {
        let g = GridDensityNd::new(vec![0.0], vec![1.0], vec![2], vec![0.0, 0.0]).unwrap();
        assert_eq!(build_tiling(&g, 3).unwrap_err(), Error::EmptyMeasure);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn equal_masses_and_slice_bounds(n in 1usize..60, d in 1usize..4, seed in 0u64..1000) {
            let shape = vec![if d == 3 { 12 } else { 100 }; d];
            let g = GridDensityNd::from_fn(vec![-1.0; d], vec![1.0; d], shape, |x| {
                1.0 + 0.5 * ((seed as f64) * 0.1 + x.iter().sum::<f64>() * 3.0).sin()
            }).unwrap();
            let t = build_tiling(&g, n).unwrap();
            prop_assert_eq!(t.len(), n);
            for m in &t.masses {
                prop_assert!((m - 1.0 / n as f64).abs() <= 1e-6 / n as f64);
            }
            let plan = decompose(n, d).unwrap();
            // every nesting branch has between n_tilde and n_tilde + 1 children
            for k in 0..d {
                let mut counts = std::collections::BTreeMap::<Vec<usize>, usize>::new();
                for idx in &t.index_set {
                    let e = counts.entry(idx[..k].to_vec()).or_default();
                    *e = (*e).max(idx[k] + 1);
                }
                for c in counts.values() {
                    prop_assert!(*c >= plan.n_tilde && *c <= plan.n_tilde + 1);
                }
            }
            let set: std::collections::BTreeSet<_> = t.index_set.iter().collect();
            prop_assert_eq!(set.len(), n);
        }
    }
}
