//! Run configuration: flags first, then an optional JSON file whose keys override them.

use std::path::{Path, PathBuf};

use attrep_core::flow1d::Scheme;
use attrep_core::optimize::GridMethod;
use attrep_core::tv::Kernel;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvChoice {
    None,
    Kde,
    Pwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Random,
    Tiling,
    Uniform,
}

/// Fully resolved parameters of one run; echoed into every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub qa: f64,
    pub qr: f64,
    pub lambda: f64,
    pub n: usize,
    pub m_grid: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub tv_method: TvChoice,
    pub kernel: Kernel,
    /// Kernel bandwidth; `None` selects `N^{-1/(2d+2)}`.
    pub h: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub mu: Option<String>,
    pub omega: Option<String>,
    pub d: usize,
    pub uniform: bool,
    pub pgm: Option<PathBuf>,
    pub p: f64,
    pub grid: bool,
    pub init: Init,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub grid_method: GridMethod,
    pub sample_dt: Option<f64>,
    pub tol_steady: f64,
    pub max_abs: f64,
    pub dump_x: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            qa: 1.0,
            qr: 1.0,
            lambda: 0.0,
            n: 50,
            m_grid: 400,
            dt: 1e-2,
            t_end: 1.0,
            scheme: Scheme::Rk4,
            tv_method: TvChoice::None,
            kernel: Kernel::Hat,
            h: None,
            seed: 0,
            out: PathBuf::from("out"),
            mu: None,
            omega: None,
            d: 1,
            uniform: false,
            pgm: None,
            p: 2.0,
            grid: false,
            init: Init::Random,
            max_iters: 5000,
            grad_tol: 1e-9,
            step0: 1.0,
            grid_method: GridMethod::Fista,
            sample_dt: None,
            tol_steady: 0.0,
            max_abs: 1e6,
            dump_x: false,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Attraction exponent in [1, 2].
    #[arg(long)]
    pub qa: Option<f64>,
    /// Repulsion exponent in [1, 2].
    #[arg(long)]
    pub qr: Option<f64>,
    /// Weight of the total-variation term.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of particles or tiles.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid resolution: cells of grid densities, quantile nodes of pseudo-inverses.
    #[arg(long = "m-grid")]
    pub m_grid: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// euler | rk4
    #[arg(long)]
    pub scheme: Option<String>,
    /// none | kde | pwc
    #[arg(long = "tv-method")]
    pub tv_method: Option<String>,
    /// hat | gaussian
    #[arg(long)]
    pub kernel: Option<String>,
    /// Kernel bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Measure: CSV file, omega1, omega2, uniform:a,b[,height] or dirac:x[,mass].
    #[arg(long)]
    pub mu: Option<String>,
    /// Datum, same forms as --mu.
    #[arg(long)]
    pub omega: Option<String>,
    /// Built-in datum, shorthand for --omega omega1|omega2.
    #[arg(long)]
    pub datum: Option<String>,
    /// Dimension for uniform tilings.
    #[arg(long)]
    pub d: Option<usize>,
    /// Tile the uniform density on the unit cube.
    #[arg(long)]
    pub uniform: bool,
    /// Grayscale PGM image used as the datum.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    /// Wasserstein order.
    #[arg(long)]
    pub p: Option<f64>,
    /// Solve the grid problem instead of moving particles.
    #[arg(long)]
    pub grid: bool,
    /// random | tiling | uniform
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long = "grad-tol")]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub step0: Option<f64>,
    /// fista | subgradient
    #[arg(long = "grid-method")]
    pub grid_method: Option<String>,
    /// Spacing of recorded flow samples.
    #[arg(long = "sample-dt")]
    pub sample_dt: Option<f64>,
    #[arg(long = "tol-steady")]
    pub tol_steady: Option<f64>,
    #[arg(long = "max-abs")]
    pub max_abs: Option<f64>,
    /// Write the quantile nodes of every flow sample.
    #[arg(long = "dump-x")]
    pub dump_x: bool,
}

fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
    }
}

impl Flags {
    fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "qa", self.qa);
        put(&mut m, "qr", self.qr);
        put(&mut m, "lambda", self.lambda);
        put(&mut m, "n", self.n);
        put(&mut m, "m_grid", self.m_grid);
        put(&mut m, "dt", self.dt);
        put(&mut m, "t_end", self.t_end);
        put(&mut m, "scheme", self.scheme.clone());
        put(&mut m, "tv_method", self.tv_method.clone());
        put(&mut m, "kernel", self.kernel.clone());
        put(&mut m, "h", self.h);
        put(&mut m, "seed", self.seed);
        put(&mut m, "out", self.out.clone());
        put(&mut m, "mu", self.mu.clone());
        put(&mut m, "omega", self.omega.clone().or_else(|| self.datum.clone()));
        put(&mut m, "d", self.d);
        put(&mut m, "uniform", self.uniform.then_some(true));
        put(&mut m, "pgm", self.pgm.clone());
        put(&mut m, "p", self.p);
        put(&mut m, "grid", self.grid.then_some(true));
        put(&mut m, "init", self.init.clone());
        put(&mut m, "max_iters", self.max_iters);
        put(&mut m, "grad_tol", self.grad_tol);
        put(&mut m, "step0", self.step0);
        put(&mut m, "grid_method", self.grid_method.clone());
        put(&mut m, "sample_dt", self.sample_dt);
        put(&mut m, "tol_steady", self.tol_steady);
        put(&mut m, "max_abs", self.max_abs);
        put(&mut m, "dump_x", self.dump_x.then_some(true));
        m
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut base = match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        base.extend(self.to_map());
        if let Some(path) = &self.config {
            base.extend(read_overrides(path)?);
        }
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_overrides(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = v else {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    };
    // accept kebab-case keys as spelled on the command line
    let mut out = Map::new();
    for (k, v) in map {
        let key = if k == "datum" { "omega".to_string() } else { k.replace('-', "_") };
        out.insert(key, v);
    }
    Ok(out)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        for (name, q) in [("qa", self.qa), ("qr", self.qr)] {
            if !(1.0..=2.0).contains(&q) {
                return fail(format!("{name} = {q} outside [1, 2]"));
            }
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.n == 0 || self.m_grid == 0 || self.d == 0 || self.max_iters == 0 {
            return fail("n, m_grid, d and max_iters must be positive".into());
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return fail("dt must be positive and t_end finite and >= 0".into());
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return fail(format!("bandwidth must be positive, got {h}"));
            }
        }
        if !(self.p >= 1.0) {
            return fail(format!("Wasserstein order must be >= 1, got {}", self.p));
        }
        if !(self.grad_tol > 0.0) || !(self.step0 > 0.0) || !(self.max_abs > 0.0) {
            return fail("grad_tol, step0 and max_abs must be positive".into());
        }
        if let Some(s) = self.sample_dt {
            if !(s > 0.0) {
                return fail("sample_dt must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Flags::default().resolve().unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn flags_then_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"qa": 1.5, "t-end": 3.0, "scheme": "euler"}"#).unwrap();
        let flags = Flags {
            qa: Some(2.0),
            qr: Some(2.0),
            config: Some(path),
            ..Flags::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.qa, 1.5);
        assert_eq!(cfg.qr, 2.0);
        assert_eq!(cfg.t_end, 3.0);
        assert_eq!(cfg.scheme, Scheme::Euler);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"qq": 1}"#).unwrap();
        let flags = Flags {
            config: Some(path),
            ..Flags::default()
        };
        assert!(matches!(flags.resolve(), Err(CliError::Config(_))));
        let bad = Flags {
            qa: Some(3.0),
            ..Flags::default()
        };
        assert!(bad.resolve().is_err());
        let scheme = Flags {
            scheme: Some("leapfrog".into()),
            ..Flags::default()
        };
        assert!(scheme.resolve().is_err());
    }

    #[test]
    fn datum_alias() {
        let flags = Flags {
            datum: Some("omega2".into()),
            ..Flags::default()
        };
        assert_eq!(flags.resolve().unwrap().omega.as_deref(), Some("omega2"));
    }
}
