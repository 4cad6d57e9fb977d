//! Parsers for the `--loss` and `--tol` mini-grammars.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use murphy_core::{ConvexGenerator, Loss, MixingMeasure, Tolerance};

use crate::table::Table;

/// One `--loss` argument before it is bound to data.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `squared` or `tweedie:<p>`
    Tweedie(f64),
    /// `atoms:<theta1>=<mass1>,<theta2>=<mass2>,...`
    Atoms(Vec<(f64, f64)>),
    /// `ecdf:<column>`, the empirical CDF of a column as mixing measure
    Ecdf(String),
    /// `linear:<slope>`, `H(theta) = slope * theta`
    Linear(f64),
}

fn number(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("{what} `{s}` is not a number"))?;
    if !v.is_finite() {
        bail!("{what} `{s}` is not finite");
    }
    Ok(v)
}

impl FromStr for LossSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "squared" {
            return Ok(LossSpec::Tweedie(0.0));
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| anyhow!("loss `{s}`: expected squared, tweedie:<p>, atoms:<t=m,...>, ecdf:<column> or linear:<slope>"))?;
        match kind {
            "tweedie" => Ok(LossSpec::Tweedie(number(arg, "Tweedie power")?)),
            "linear" => Ok(LossSpec::Linear(number(arg, "slope")?)),
            "ecdf" if !arg.trim().is_empty() => Ok(LossSpec::Ecdf(arg.trim().to_string())),
            "atoms" => {
                let atoms = arg
                    .split(',')
                    .map(|a| {
                        let (t, m) = a.split_once('=').ok_or_else(|| anyhow!("atom `{a}` must read theta=mass"))?;
                        Ok((number(t, "atom location")?, number(m, "atom mass")?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LossSpec::Atoms(atoms))
            }
            _ => bail!("unknown loss `{s}`"),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Tweedie(p) => write!(f, "tweedie:{p}"),
            LossSpec::Linear(c) => write!(f, "linear:{c}"),
            LossSpec::Ecdf(c) => write!(f, "ecdf:{c}"),
            LossSpec::Atoms(a) => {
                write!(f, "atoms:")?;
                for (i, (t, m)) in a.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}={m}")?;
                }
                Ok(())
            }
        }
    }
}

/// A loss bound to data.
pub enum LossFn {
    Bregman(ConvexGenerator<f64>),
    Mixture(MixingMeasure<f64>),
}

pub struct NamedLoss {
    pub name: String,
    pub loss: LossFn,
}

impl NamedLoss {
    pub fn as_loss(&self) -> &dyn Loss<f64> {
        match &self.loss {
            LossFn::Bregman(g) => g,
            LossFn::Mixture(h) => h,
        }
    }

    pub fn measure(&self) -> Option<&MixingMeasure<f64>> {
        match &self.loss {
            LossFn::Mixture(h) => Some(h),
            LossFn::Bregman(_) => None,
        }
    }

    pub fn tweedie_power(&self) -> Option<f64> {
        match &self.loss {
            LossFn::Bregman(g) => g.tweedie_power(),
            LossFn::Mixture(_) => None,
        }
    }
}

/// Columns an `ecdf:` loss needs from the input.
pub fn ecdf_columns(specs: &[LossSpec]) -> Vec<String> {
    specs
        .iter()
        .filter_map(|s| match s {
            LossSpec::Ecdf(c) => Some(c.clone()),
            _ => None,
        })
        .collect()
}

pub fn bind(specs: &[LossSpec], table: &Table) -> Result<Vec<NamedLoss>> {
    specs
        .iter()
        .map(|spec| {
            let loss = match spec {
                LossSpec::Tweedie(p) => LossFn::Bregman(ConvexGenerator::tweedie(*p)),
                LossSpec::Atoms(a) => LossFn::Mixture(MixingMeasure::atoms(a.clone())?),
                LossSpec::Linear(c) => LossFn::Mixture(MixingMeasure::linear(*c)?),
                LossSpec::Ecdf(c) => LossFn::Mixture(MixingMeasure::empirical_cdf(table.column(c)?)?),
            };
            Ok(NamedLoss { name: spec.to_string(), loss })
        })
        .collect()
}

/// `--tol default | abs:<t> | band:<z>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TolSpec {
    Default,
    Absolute(f64),
    Band(f64),
}

impl FromStr for TolSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "default" {
            return Ok(TolSpec::Default);
        }
        if let Some(t) = s.strip_prefix("abs:") {
            let t = number(t, "tolerance")?;
            if t < 0.0 {
                bail!("tolerance must be non-negative");
            }
            return Ok(TolSpec::Absolute(t));
        }
        if let Some(z) = s.strip_prefix("band:") {
            let z = number(z, "band width")?;
            if z <= 0.0 {
                bail!("band width must be positive");
            }
            return Ok(TolSpec::Band(z));
        }
        bail!("tolerance `{s}`: expected default, abs:<t> or band:<z>")
    }
}

impl TolSpec {
    pub fn tolerance(self, grid_points: usize) -> Tolerance<f64> {
        match self {
            TolSpec::Default => Tolerance::Default,
            TolSpec::Absolute(t) => Tolerance::Absolute(t),
            TolSpec::Band(z) => Tolerance::Sampling { z, grid_points },
        }
    }
}

impl fmt::Display for TolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TolSpec::Default => write!(f, "default"),
            TolSpec::Absolute(t) => write!(f, "abs:{t}"),
            TolSpec::Band(z) => write!(f, "band:{z}"),
        }
    }
}
