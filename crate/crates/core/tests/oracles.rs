use attrep_core::energy::{
    fourier_energy_1d, grad_particles, symmetrized_energy, total_energy, FourierQuadrature, ParticleSystem,
};
use attrep_core::kernels::{dq_constant, PowerKernelParams};
use attrep_core::measures::DiscreteMeasure;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let k = rng.random_range(1..=8);
    let xs: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / s).collect();
    DiscreteMeasure::from_1d(&xs, &w).unwrap()
}

/// Direct double sum of `-1/2 sum (a_i a_j) |x_i - x_j|^q` over the signed measure.
fn signed_sum(mu: &DiscreteMeasure, omega: &DiscreteMeasure, q: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = mu.points().iter().copied().zip(mu.weights().iter().copied()).collect();
    atoms.extend(omega.points().iter().zip(omega.weights()).map(|(x, w)| (*x, -w)));
    let mut s = 0.0;
    for &(x, a) in &atoms {
        for &(y, b) in &atoms {
            s += a * b * (x - y).abs().powf(q);
        }
    }
    -0.5 * s
}

#[test]
fn fourier_matches_spatial_sum() {
    let quad = FourierQuadrature::default();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng);
        let omega = random_measure(&mut rng);
        for q in [1.0, 1.3, 1.7] {
            let spatial = symmetrized_energy(&mu, &omega, q).unwrap();
            assert!((spatial - signed_sum(&mu, &omega, q)).abs() < 1e-12);
            let fourier = fourier_energy_1d(&mu, &omega, q, &quad).unwrap();
            assert!(
                (fourier - spatial).abs() <= 1e-3 * (1.0 + spatial.abs()),
                "seed {seed} q {q}: {fourier} vs {spatial}"
            );
        }
    }
}

#[test]
fn dq_closed_form_at_one() {
    let dq = dq_constant(1.0, 1).unwrap();
    assert!((dq - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
}

/// Particles with pairwise gaps of at least `gap` among themselves and the datum atoms.
fn separated(rng: &mut ChaCha8Rng, n: usize, dim: usize, gap: f64, avoid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let far = pts.iter().chain(avoid).all(|o| {
            o.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= gap
        });
        if far {
            pts.push(p);
        }
    }
    pts
}

fn central_difference_check(seed: u64, dim: usize, q_a: f64, q_r: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(3..=8);
    let omega_pts = separated(&mut rng, k, dim, 0.1, &[]);
    let omega = DiscreteMeasure::uniform(dim, omega_pts.concat()).unwrap();
    let n = rng.random_range(2..=20);
    let pts = separated(&mut rng, n, dim, 0.1, &omega_pts);
    let params = PowerKernelParams::new(q_a, q_r, dim).unwrap();
    let mu = ParticleSystem::new(dim, pts.concat()).unwrap();
    let g = grad_particles(&mu, &omega, &params).unwrap();

    let h = 1e-6;
    let mut fd = vec![0.0; g.len()];
    for i in 0..g.len() {
        let mut plus = mu.clone();
        plus.positions_mut()[i] += h;
        let mut minus = mu.clone();
        minus.positions_mut()[i] -= h;
        let ep = total_energy(&plus, &omega, &params).unwrap().total;
        let em = total_energy(&minus, &omega, &params).unwrap().total;
        fd[i] = (ep - em) / (2.0 * h);
    }
    let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    err / scale
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..10u64 {
        for q in [1.0, 1.5, 2.0] {
            let rel = central_difference_check(seed, 1, q, q);
            assert!(rel <= 1e-5, "d=1 seed {seed} q {q}: {rel}");
        }
    }
    for seed in 0..4u64 {
        let rel = central_difference_check(100 + seed, 2, 1.5, 1.2);
        assert!(rel <= 1e-5, "d=2 seed {seed}: {rel}");
    }
}

/// `mu_n = n^{-1} 1_[0, n]` against `omega = 1_[-1, 0]` with `q_a = 1`, `q_r = 2`:
/// `E = (n + 1) / 2 - n^2 / 12`.
fn counterexample_energy(n: f64, atoms: usize) -> f64 {
    let mid = |a: f64, b: f64| -> Vec<f64> {
        (0..atoms).map(|k| a + (b - a) * (k as f64 + 0.5) / atoms as f64).collect()
    };
    let mu = DiscreteMeasure::uniform_1d(&mid(0.0, n)).unwrap();
    let omega = DiscreteMeasure::uniform_1d(&mid(-1.0, 0.0)).unwrap();
    let params = PowerKernelParams::new(1.0, 2.0, 1).unwrap();
    total_energy(&mu, &omega, &params).unwrap().total
}

#[test]
fn counterexample_closed_form() {
    let atoms = 1000;
    for n in [1.0, 4.0, 16.0, 64.0] {
        // midpoint atoms reproduce the attraction exactly and the variance up to 1/atoms^2
        let exact = (n + 1.0) / 2.0 - n * n / 12.0 * (1.0 - 1.0 / (atoms * atoms) as f64);
        let e = counterexample_energy(n, atoms);
        assert!((e - exact).abs() < 1e-9 * (1.0 + exact.abs()), "n={n}: {e} vs {exact}");
    }
    // unbounded below along the sequence once the quadratic repulsion dominates
    let tail: Vec<f64> = [4.0, 16.0, 64.0, 256.0].iter().map(|&n| counterexample_energy(n, 400)).collect();
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
    assert!(tail[3] < -5000.0);
}

proptest! {
    #[test]
    fn symmetrized_energy_is_nonnegative(seed in 0u64..1000, q in 1.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng);
        let omega = random_measure(&mut rng);
        prop_assert!(symmetrized_energy(&mu, &omega, q).unwrap() >= -1e-12);
    }

    #[test]
    fn symmetrized_energy_vanishes_on_the_diagonal(seed in 0u64..1000, q in 1.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng);
        prop_assert!(symmetrized_energy(&mu, &mu, q).unwrap().abs() < 1e-12);
    }
}
