//! Measure specifications accepted on the command line.

use std::path::Path;

use attrep_core::measures::{
    pseudo_inverse, wasserstein_1_exact, DiscreteMeasure, GridDensity1D, PseudoInverse1D,
};

use crate::error::{CliError, Result};

/// `omega1 = 4 * 1_[0.2,0.4] + 40 * 1_[0.6,0.605]` on `[0, 1]`.
pub fn omega1(m: usize) -> Result<GridDensity1D> {
    Ok(GridDensity1D::from_boxes(0.0, 1.0, m, &[(0.2, 0.4, 4.0), (0.6, 0.605, 40.0)])?)
}

/// `omega2 = 5 * 1_[0.2,0.4]` on `[0, 1]`.
pub fn omega2(m: usize) -> Result<GridDensity1D> {
    Ok(GridDensity1D::from_boxes(0.0, 1.0, m, &[(0.2, 0.4, 5.0)])?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureInput {
    Grid(GridDensity1D),
    Discrete(DiscreteMeasure),
}

fn numbers(s: &str, spec: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("cannot parse {t:?} in {spec:?}")))
        })
        .collect()
}

impl MeasureInput {
    /// `omega1`, `omega2`, `uniform:a,b[,height]`, `dirac:x[,mass]`, or a CSV path.
    pub fn parse(spec: &str, m_grid: usize) -> Result<Self> {
        match spec {
            "omega1" => return Ok(Self::Grid(omega1(m_grid)?)),
            "omega2" => return Ok(Self::Grid(omega2(m_grid)?)),
            _ => {}
        }
        if let Some(rest) = spec.strip_prefix("uniform:") {
            let v = numbers(rest, spec)?;
            let (a, b) = match v[..] {
                [a, b] | [a, b, _] => (a, b),
                _ => return Err(CliError::Input(format!("expected uniform:a,b[,height], got {spec:?}"))),
            };
            if !(a < b) {
                return Err(CliError::Input(format!("uniform needs a < b in {spec:?}")));
            }
            let h = v.get(2).copied().unwrap_or(1.0 / (b - a));
            return Ok(Self::Grid(GridDensity1D::uniform(a, b, h, m_grid)?));
        }
        if let Some(rest) = spec.strip_prefix("dirac:") {
            let v = numbers(rest, spec)?;
            return match v[..] {
                [x] => Ok(Self::Discrete(DiscreteMeasure::dirac(&[x]))),
                [x, m] => Ok(Self::Discrete(DiscreteMeasure::from_1d(&[x], &[m])?)),
                _ => Err(CliError::Input(format!("expected dirac:x[,mass], got {spec:?}"))),
            };
        }
        let path = Path::new(spec);
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self::Discrete(DiscreteMeasure::read_csv(file)?))
    }

    pub fn to_discrete(&self) -> DiscreteMeasure {
        match self {
            Self::Grid(g) => g.to_discrete(),
            Self::Discrete(d) => d.clone(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity1D> {
        match self {
            Self::Grid(g) => Some(g),
            Self::Discrete(_) => None,
        }
    }

    pub fn pseudo_inverse(&self, m: usize) -> Result<PseudoInverse1D> {
        Ok(match self {
            Self::Grid(g) => pseudo_inverse(g, m)?,
            Self::Discrete(d) => pseudo_inverse(d, m)?,
        })
    }

    pub fn w1_exact(&self, other: &Self) -> Result<f64> {
        Ok(match (self, other) {
            (Self::Grid(a), Self::Grid(b)) => wasserstein_1_exact(a, b)?,
            (Self::Grid(a), Self::Discrete(b)) => wasserstein_1_exact(a, b)?,
            (Self::Discrete(a), Self::Grid(b)) => wasserstein_1_exact(a, b)?,
            (Self::Discrete(a), Self::Discrete(b)) => wasserstein_1_exact(a, b)?,
        })
    }
}
