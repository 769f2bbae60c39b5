use attrep_core::energy::ParticleSystem;
use attrep_core::kernels::PowerKernelParams;
use attrep_core::measures::{wasserstein_1_exact, DiscreteMeasure, GridDensity1D};
use attrep_core::optimize::{
    minimize_grid, minimize_particles, DescentConfig, GridMethod, GridQpProblem, GridSolverConfig,
};
use attrep_core::tiling::{build_tiling, decompose, particles_from_tiling, GridDensityNd};
use attrep_core::tv::{pwc_tv, TvMethod};
use std::f64::consts::PI;

/// Raised cosine `(1 + cos(pi x)) / 2` on `[-1, 1]`: unit mass, peak 1, total variation 2.
fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * x).cos())
    }
}

fn bump_cdf(x: f64) -> f64 {
    0.5 * (x + 1.0) + (PI * x).sin() / (2.0 * PI)
}

fn bump_quantile(z: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bump_cdf(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn pwc_tv_of_quantile_particles_approaches_density_tv() {
    let n = 2000;
    let xs: Vec<f64> = (0..n).map(|j| bump_quantile((j as f64 + 0.5) / n as f64)).collect();
    let tv = pwc_tv(&ParticleSystem::from_1d(&xs).unwrap()).unwrap().tv;
    assert!((tv - 2.0).abs() / 2.0 <= 0.02, "{tv}");
}

#[test]
fn pwc_tv_is_translation_and_order_invariant() {
    let a = pwc_tv(&ParticleSystem::from_1d(&[0.3, 0.0, 1.7, 0.9]).unwrap()).unwrap().tv;
    let b = pwc_tv(&ParticleSystem::from_1d(&[5.0, 6.7, 5.9, 5.3]).unwrap()).unwrap().tv;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn uniform_tiling_w1_scales_like_inverse_slices() {
    let target = GridDensity1D::uniform(0.0, 1.0, 1.0, 4096).unwrap();
    let grid = GridDensityNd::from(&target);
    for n in [16, 64, 256, 1024] {
        let t = build_tiling(&grid, n).unwrap();
        let mu = particles_from_tiling(&t).unwrap().to_measure();
        let w1 = wasserstein_1_exact(&mu, &target).unwrap();
        let slices = decompose(n, 1).unwrap().n_tilde as f64;
        assert!((w1 * slices - 0.25).abs() < 1e-9, "N={n}: {w1}");
    }
}

#[test]
fn square_tiles_shrink_in_every_direction() {
    let g = GridDensityNd::uniform(vec![0.0, 0.0], vec![1.0, 1.0], vec![256, 256]).unwrap();
    let mut prev = f64::INFINITY;
    for n in [16, 64, 256] {
        let t = build_tiling(&g, n).unwrap();
        let diam = t
            .boxes
            .iter()
            .map(|b| b.lo.iter().zip(&b.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let n_tilde = decompose(n, 2).unwrap().n_tilde as f64;
        assert!(diam * n_tilde < 2.0, "N={n}: {diam}");
        assert!(diam < prev);
        prev = diam;
    }
}

fn bump_datum(cells: usize) -> GridDensity1D {
    GridDensity1D::from_fn(-1.0, 1.0, cells, bump).unwrap().normalized()
}

#[test]
fn minimizers_approach_the_datum_as_n_grows() {
    let omega_grid = bump_datum(400);
    let omega = omega_grid.to_discrete();
    let params = PowerKernelParams::symmetric(1.5, 1).unwrap();
    let cfg = DescentConfig::default();
    let mut prev = f64::INFINITY;
    for n in [10, 50, 200] {
        let start = particles_from_tiling(&build_tiling(&GridDensityNd::from(&omega_grid), n).unwrap()).unwrap();
        let res = minimize_particles(&start, &omega, &params, 0.0, &TvMethod::None, &cfg).unwrap();
        assert!(res.report.total <= attrep_core::energy::total_energy(&start, &omega, &params).unwrap().total);
        let w1 = wasserstein_1_exact(&res.particles.to_measure(), &omega_grid).unwrap();
        assert!(w1 < prev, "N={n}: {w1} !< {prev}");
        prev = w1;
    }
}

#[test]
fn grid_tv_decreases_with_lambda_on_omega1() {
    let m = 200;
    let w = GridDensity1D::from_boxes(0.0, 1.0, m, &[(0.2, 0.4, 4.0), (0.6, 0.605, 40.0)]).unwrap();
    let u0 = GridDensity1D::uniform(0.0, 1.0, 1.0, m).unwrap();
    let solve = |lambda: f64, method: GridMethod| {
        let problem = GridQpProblem {
            u0: u0.clone(),
            w: w.clone(),
            q: 1.0,
            lambda,
        };
        let cfg = GridSolverConfig {
            method,
            ..GridSolverConfig::default()
        };
        minimize_grid(&problem, &cfg).unwrap()
    };
    let tvs: Vec<f64> = [1e-6, 1e-4].iter().map(|&l| solve(l, GridMethod::Fista).u.total_variation()).collect();
    assert!(tvs[1] < tvs[0], "{tvs:?}");
    for lambda in [1e-6, 1e-4] {
        let res = solve(lambda, GridMethod::Subgradient);
        assert!(res.trace.windows(2).all(|p| p[1].energy <= p[0].energy));
        assert!((res.u.mass() - 1.0).abs() < 1e-9);
        assert!(res.u.cells.iter().all(|c| *c >= 0.0));
    }
}

#[test]
fn larger_lambda_smooths_particles() {
    let omega = DiscreteMeasure::from_1d(&[0.0, 0.1, 0.2, 1.0, 1.05, 1.1], &[1.0 / 6.0; 6]).unwrap();
    let params = PowerKernelParams::symmetric(1.0, 1).unwrap();
    let start = attrep_core::optimize::random_particles(12, 1, 0.0, 1.0, 3).unwrap();
    let cfg = DescentConfig {
        max_iters: 3000,
        ..DescentConfig::default()
    };
    let tv = |lambda: f64| {
        let r = minimize_particles(&start, &omega, &params, lambda, &TvMethod::Pwc, &cfg).unwrap();
        pwc_tv(&r.particles).unwrap().tv
    };
    assert!(tv(1e-2) < tv(0.0));
}
