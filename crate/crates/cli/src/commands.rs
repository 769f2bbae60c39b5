//! Subcommand implementations. Each writes `result.json` (with the resolved
//! configuration echoed under `config`) plus its CSV outputs into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use attrep_core::energy::{datum_self_energy, symmetrized_energy, ParticleSystem};
use attrep_core::flow1d::{diagnose_asymptotics, integrate, steady_state_qr1, FlowConfig, FlowState, Regime};
use attrep_core::kernels::PowerKernelParams;
use attrep_core::measures::{pseudo_inverse, wasserstein_1_exact, wasserstein_p, DiscreteMeasure, WeightedPoints};
use attrep_core::optimize::{
    minimize_grid, minimize_particles, project_simplex, random_particles, write_trace_csv, DescentConfig,
    GridQpProblem, GridSolverConfig,
};
use attrep_core::tiling::{build_tiling, decompose, particles_from_tiling, GridDensityNd};
use attrep_core::tv::{
    default_bandwidth, kde_tv_1d, kde_tv_nd, pwc_tv, regularized_energy, KernelEstimatorConfig, TvMethod,
};
use attrep_core::measures::GridDensity1D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Init, RunConfig, TvChoice};
use crate::error::{CliError, Result};
use crate::input::MeasureInput;
use crate::pgm::PgmImage;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>, dir: &Path, name: &str) -> Result<()> {
    w.flush().map_err(|e| CliError::io(dir.join(name), e))
}

fn write_result(cfg: &RunConfig, command: &str, result: Value) -> Result<Value> {
    let doc = json!({
        "command": command,
        "config": cfg,
        "result": result,
    });
    let mut w = create(&cfg.out, "result.json")?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::io(cfg.out.join("result.json"), e))?;
    finish(w, &cfg.out, "result.json")?;
    Ok(doc)
}

fn require<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required for this command")))
}

fn datum(cfg: &RunConfig) -> Result<MeasureInput> {
    MeasureInput::parse(require(&cfg.omega, "omega")?, cfg.m_grid)
}

/// Particles with equal weights; the weights in the file must be uniform.
fn as_particles(m: &DiscreteMeasure) -> Result<ParticleSystem> {
    let w0 = m.weight(0);
    if (0..m.len()).any(|i| (m.weight(i) - w0).abs() > 1e-12 * w0.abs()) {
        return Err(CliError::Input("particle input must carry equal weights".into()));
    }
    Ok(ParticleSystem::new(m.dim(), m.points().to_vec())?)
}

fn tv_method(cfg: &RunConfig, n: usize, d: usize) -> Result<TvMethod> {
    Ok(match cfg.tv_method {
        TvChoice::None => TvMethod::None,
        TvChoice::Pwc => TvMethod::Pwc,
        TvChoice::Kde => {
            let h = cfg.h.unwrap_or_else(|| default_bandwidth(n, d));
            TvMethod::Kde(KernelEstimatorConfig::new(cfg.kernel, h)?)
        }
    })
}

pub fn energy(cfg: &RunConfig) -> Result<Value> {
    let mu = MeasureInput::parse(require(&cfg.mu, "mu")?, cfg.m_grid)?.to_discrete();
    let omega = datum(cfg)?.to_discrete();
    let params = PowerKernelParams::new(cfg.qa, cfg.qr, mu.dim())?;
    let report = if cfg.lambda > 0.0 && cfg.tv_method != TvChoice::None {
        let ps = as_particles(&mu)?;
        regularized_energy(&ps, &omega, &params, cfg.lambda, &tv_method(cfg, ps.n(), ps.dim())?)?
    } else {
        attrep_core::energy::total_energy(&mu, &omega, &params)?
    };
    let mut result = json!({ "report": report });
    if cfg.qa == cfg.qr && (mu.mass() - omega.mass()).abs() <= 1e-9 * mu.mass() {
        result["symmetrized"] = json!(symmetrized_energy(&mu, &omega, cfg.qa)?);
        result["datum_self_energy"] = json!(datum_self_energy(&omega, cfg.qa));
    }
    write_result(cfg, "energy", result)
}

fn bounding_interval(m: &DiscreteMeasure) -> (f64, f64) {
    let lo = m.points().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.points().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

pub fn minimize(cfg: &RunConfig) -> Result<Value> {
    if cfg.grid {
        return minimize_on_grid(cfg);
    }
    let (omega, tiling_density) = match &cfg.pgm {
        Some(path) => {
            let img = PgmImage::read(path)?;
            (img.to_discrete()?, Some(img.to_grid()?))
        }
        None => {
            let input = datum(cfg)?;
            let grid = input.as_grid().map(GridDensityNd::from);
            (input.to_discrete(), grid)
        }
    };
    let d = omega.dim();
    let params = PowerKernelParams::new(cfg.qa, cfg.qr, d)?;
    let mu0 = match cfg.init {
        Init::Random => {
            let (lo, hi) = bounding_interval(&omega);
            random_particles(cfg.n, d, lo, hi, cfg.seed)?
        }
        Init::Tiling => match &tiling_density {
            Some(g) => particles_from_tiling(&build_tiling(g, cfg.n)?)?,
            None if d == 1 => ParticleSystem::from_1d(&pseudo_inverse(&omega, cfg.n)?.values)?,
            None => return Err(CliError::Config("tiling init needs a grid datum or an image".into())),
        },
        Init::Uniform => {
            if d != 1 {
                return Err(CliError::Config("uniform init is one-dimensional".into()));
            }
            let (lo, hi) = bounding_interval(&omega);
            let xs: Vec<f64> = (0..cfg.n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / cfg.n as f64).collect();
            ParticleSystem::from_1d(&xs)?
        }
    };
    let method = tv_method(cfg, cfg.n, d)?;
    let dcfg = DescentConfig {
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        step0: cfg.step0,
        seed: cfg.seed,
        ..DescentConfig::default()
    };
    let res = minimize_particles(&mu0, &omega, &params, cfg.lambda, &method, &dcfg)?;
    let mut w = create(&cfg.out, "trace.csv")?;
    write_trace_csv(&res.trace, &mut w)?;
    finish(w, &cfg.out, "trace.csv")?;
    let mut w = create(&cfg.out, "points.csv")?;
    res.particles.to_measure().write_csv(&mut w)?;
    finish(w, &cfg.out, "points.csv")?;
    let mut result = json!({
        "report": res.report,
        "converged": res.converged,
        "iterations": res.iterations,
        "tv_method": method,
    });
    if d == 1 {
        result["w1_to_datum"] = json!(wasserstein_1_exact(&res.particles.to_measure(), &omega)?);
    }
    write_result(cfg, "minimize", result)
}

fn minimize_on_grid(cfg: &RunConfig) -> Result<Value> {
    let w = datum(cfg)?
        .as_grid()
        .cloned()
        .ok_or_else(|| CliError::Config("the grid solver needs a grid datum".into()))?;
    let mass: f64 = w.cells.iter().sum();
    let u0_cells = match cfg.init {
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let raw: Vec<f64> = (0..w.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            project_simplex(&raw.iter().map(|v| v * mass / s).collect::<Vec<_>>(), mass)
        }
        Init::Uniform | Init::Tiling => vec![mass / w.len() as f64; w.len()],
    };
    let problem = GridQpProblem {
        u0: GridDensity1D::new(w.x_min, w.x_max, u0_cells)?,
        w: w.clone(),
        q: cfg.qa,
        lambda: cfg.lambda,
    };
    let gcfg = GridSolverConfig {
        method: cfg.grid_method,
        max_iters: cfg.max_iters,
        ..GridSolverConfig::default()
    };
    let res = minimize_grid(&problem, &gcfg)?;
    let mut out = create(&cfg.out, "trace.csv")?;
    write_trace_csv(&res.trace, &mut out)?;
    finish(out, &cfg.out, "trace.csv")?;
    let mut out = create(&cfg.out, "density.csv")?;
    let io = |e| CliError::io(cfg.out.join("density.csv"), e);
    writeln!(out, "x,u").map_err(io)?;
    for (i, u) in res.u.cells.iter().enumerate() {
        writeln!(out, "{:?},{:?}", res.u.cell_center(i), u).map_err(io)?;
    }
    finish(out, &cfg.out, "density.csv")?;
    write_result(
        cfg,
        "minimize",
        json!({
            "report": res.report,
            "objective": res.objective,
            "iterations": res.iterations,
            "tv": res.report.tv_term,
        }),
    )
}

pub fn flow(cfg: &RunConfig) -> Result<Value> {
    let mu0 = MeasureInput::parse(require(&cfg.mu, "mu")?, cfg.m_grid)?;
    let omega = datum(cfg)?;
    let params = PowerKernelParams::new(cfg.qa, cfg.qr, 1)?;
    let mut x = mu0.pseudo_inverse(cfg.m_grid)?;
    x.mass = 1.0;
    let y = omega.pseudo_inverse(cfg.m_grid)?;
    let state = FlowState::new(x, y, params)?;
    let fcfg = FlowConfig {
        dt0: cfg.dt,
        t_end: cfg.t_end,
        scheme: cfg.scheme,
        monotone_guard: true,
        tol_steady: cfg.tol_steady,
        sample_every: cfg.sample_dt,
        max_abs: cfg.max_abs,
    };
    let traj = integrate(&state, &fcfg)?;
    let diag = diagnose_asymptotics(&traj, omega.as_grid())?;
    let target = match (diag.regime, omega.as_grid()) {
        (Regime::SteadyStateQr1, Some(g)) => {
            let mut t = pseudo_inverse(&steady_state_qr1(g, cfg.qa)?, cfg.m_grid)?;
            t.mass = 1.0;
            Some(t)
        }
        _ => None,
    };
    let mut w = create(&cfg.out, "trajectory.csv")?;
    traj.write_csv(&mut w, target.as_ref())?;
    finish(w, &cfg.out, "trajectory.csv")?;
    if cfg.dump_x {
        let dump: Vec<Value> = traj
            .samples
            .iter()
            .map(|s| json!({ "t": s.t(), "x": s.state.x.values }))
            .collect();
        let mut w = create(&cfg.out, "samples.json")?;
        serde_json::to_writer(&mut w, &dump).map_err(|e| CliError::Input(e.to_string()))?;
        finish(w, &cfg.out, "samples.json")?;
    }
    let last = traj.last();
    write_result(
        cfg,
        "flow",
        json!({
            "accepted_steps": traj.accepted_steps,
            "rejected_steps": traj.rejected_steps,
            "reached_steady": traj.reached_steady,
            "final": {
                "t": last.t(),
                "mean": last.mean(),
                "energy": last.energy,
                "dissipation": last.dissipation,
            },
            "diagnostics": diag,
        }),
    )
}

pub fn tv(cfg: &RunConfig) -> Result<Value> {
    let mu = as_particles(&MeasureInput::parse(require(&cfg.mu, "mu")?, cfg.m_grid)?.to_discrete())?;
    let report = match cfg.tv_method {
        TvChoice::Pwc => pwc_tv(&mu)?,
        TvChoice::Kde => {
            let d = mu.dim();
            let h = cfg.h.unwrap_or_else(|| default_bandwidth(mu.n(), d));
            let kcfg = KernelEstimatorConfig::new(cfg.kernel, h)?;
            if d == 1 {
                kde_tv_1d(&mu, &kcfg)?
            } else {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for i in 0..mu.n() {
                    for (k, x) in mu.point(i).iter().enumerate() {
                        lo[k] = lo[k].min(x - 4.0 * h);
                        hi[k] = hi[k].max(x + 4.0 * h);
                    }
                }
                kde_tv_nd(&mu, &kcfg, lo, hi, vec![cfg.m_grid; d])?
            }
        }
        TvChoice::None => return Err(CliError::Config("tv needs --tv-method kde or pwc".into())),
    };
    write_result(cfg, "tv", serde_json::to_value(report).expect("report serializes"))
}

pub fn wasserstein(cfg: &RunConfig) -> Result<Value> {
    let a = MeasureInput::parse(require(&cfg.mu, "mu")?, cfg.m_grid)?;
    let b = datum(cfg)?;
    let mut xa = a.pseudo_inverse(cfg.m_grid)?;
    let mut xb = b.pseudo_inverse(cfg.m_grid)?;
    xa.mass = 1.0;
    xb.mass = 1.0;
    let p = if cfg.p.is_infinite() { f64::INFINITY } else { cfg.p };
    write_result(
        cfg,
        "wasserstein",
        json!({
            "p": p,
            "w_p": wasserstein_p(&xa, &xb, p)?,
            "w1_exact": a.w1_exact(&b)?,
        }),
    )
}

pub fn tile(cfg: &RunConfig) -> Result<Value> {
    let density = if let Some(path) = &cfg.pgm {
        PgmImage::read(path)?.to_grid()?
    } else if cfg.uniform {
        let per_axis = if cfg.d <= 2 { 100 } else { 16 };
        GridDensityNd::uniform(vec![0.0; cfg.d], vec![1.0; cfg.d], vec![per_axis; cfg.d])?
    } else {
        let input = datum(cfg)?;
        let g = input
            .as_grid()
            .ok_or_else(|| CliError::Config("tile needs --uniform, --pgm or a grid datum".into()))?;
        GridDensityNd::from(g)
    };
    let tiling = build_tiling(&density, cfg.n)?;
    let particles = particles_from_tiling(&tiling)?;
    let mut w = create(&cfg.out, "tiling.json")?;
    tiling.write_json(&mut w)?;
    finish(w, &cfg.out, "tiling.json")?;
    let mut w = create(&cfg.out, "points.csv")?;
    particles.to_measure().write_csv(&mut w)?;
    finish(w, &cfg.out, "points.csv")?;
    let plan = decompose(cfg.n, density.dim())?;
    let min = tiling.masses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = tiling.masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    write_result(
        cfg,
        "tile",
        json!({
            "dim": tiling.dim,
            "N": tiling.len(),
            "decomposition": plan,
            "masses": tiling.masses,
            "min_mass": min,
            "max_mass": max,
        }),
    )
}
