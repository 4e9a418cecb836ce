//! Exact default-count distributions for the one-period models.

mod davis_lo;
mod distribution;
mod mixture;
mod torri;
mod vasicek;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Quadrature;

pub use davis_lo::{davis_lo_log_probs_at, davis_lo_pmf, DavisLoTable};
pub use distribution::CountDistribution;
pub use mixture::{probit_mixture_log_probs_at, probit_mixture_pmf, ProbitNormal, ProbitPoint};
pub use torri::{
    activation_probability, torri_log_probs_at, torri_mixture_log_probs, torri_pmf, torri_pmf_mgf,
    ContagionState,
};
pub use vasicek::{conditional_vasicek_rate, vasicek_log_probs_at, vasicek_pmf};

/// Cumulative contagion: idiosyncratic default `p`, pairwise infection `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DavisLo {
    pub p: f64,
    pub q: f64,
}

/// Threshold contagion: idiosyncratic default `p`, immunization `u`,
/// infectivity `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torri {
    pub p: f64,
    pub u: f64,
    pub v: f64,
}

/// Gaussian one-factor model: unconditional default `p`, asset correlation
/// `rho_a` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vasicek {
    pub p: f64,
    pub rho_a: f64,
}

/// Structural parameters of one of the three one-period models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    DavisLo(DavisLo),
    Torri(Torri),
    Vasicek(Vasicek),
}

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DavisLo,
    Torri,
    Vasicek,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Torri, Family::DavisLo, Family::Vasicek];

    pub fn name(self) -> &'static str {
        match self {
            Family::DavisLo => "davis_lo",
            Family::Torri => "torri",
            Family::Vasicek => "vasicek",
        }
    }

    /// Number of free parameters.
    pub fn dimension(self) -> usize {
        match self {
            Family::DavisLo | Family::Vasicek => 2,
            Family::Torri => 3,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "davislo" | "dl" => Ok(Family::DavisLo),
            "torri" => Ok(Family::Torri),
            "vasicek" => Ok(Family::Vasicek),
            other => Err(Error::Domain(format!("unknown model family '{other}'"))),
        }
    }
}

fn check_prob(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} outside [0,1]")))
    }
}

impl DavisLo {
    pub fn validate(&self) -> Result<()> {
        check_prob("p", self.p)?;
        check_prob("q", self.q)
    }
}

impl Torri {
    pub fn validate(&self) -> Result<()> {
        check_prob("p", self.p)?;
        check_prob("u", self.u)?;
        check_prob("v", self.v)
    }
}

impl Vasicek {
    pub fn validate(&self) -> Result<()> {
        check_prob("p", self.p)?;
        if (0.0..1.0).contains(&self.rho_a) {
            Ok(())
        } else {
            Err(Error::Domain(format!("rho_a = {} outside [0,1)", self.rho_a)))
        }
    }
}

impl ModelParams {
    pub fn family(&self) -> Family {
        match self {
            ModelParams::DavisLo(_) => Family::DavisLo,
            ModelParams::Torri(_) => Family::Torri,
            ModelParams::Vasicek(_) => Family::Vasicek,
        }
    }

    /// Baseline (idiosyncratic or unconditional) default probability.
    pub fn p(&self) -> f64 {
        match self {
            ModelParams::DavisLo(m) => m.p,
            ModelParams::Torri(m) => m.p,
            ModelParams::Vasicek(m) => m.p,
        }
    }

    /// Same structural parameters with the baseline probability replaced.
    pub fn with_p(&self, p: f64) -> ModelParams {
        match *self {
            ModelParams::DavisLo(m) => ModelParams::DavisLo(DavisLo { p, ..m }),
            ModelParams::Torri(m) => ModelParams::Torri(Torri { p, ..m }),
            ModelParams::Vasicek(m) => ModelParams::Vasicek(Vasicek { p, ..m }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::DavisLo(m) => m.validate(),
            ModelParams::Torri(m) => m.validate(),
            ModelParams::Vasicek(m) => m.validate(),
        }
    }

    /// Parameters as a flat vector in the family's canonical order
    /// (`p,q` / `p,u,v` / `p,rho_a`).
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            ModelParams::DavisLo(m) => vec![m.p, m.q],
            ModelParams::Torri(m) => vec![m.p, m.u, m.v],
            ModelParams::Vasicek(m) => vec![m.p, m.rho_a],
        }
    }

    pub fn from_vec(family: Family, x: &[f64]) -> ModelParams {
        match family {
            Family::DavisLo => ModelParams::DavisLo(DavisLo { p: x[0], q: x[1] }),
            Family::Torri => ModelParams::Torri(Torri {
                p: x[0],
                u: x[1],
                v: x[2],
            }),
            Family::Vasicek => ModelParams::Vasicek(Vasicek {
                p: x[0],
                rho_a: x[1],
            }),
        }
    }

    /// Exact count distribution on `{0..n}`.
    pub fn pmf(&self, n: usize, quad: Quadrature) -> Result<CountDistribution> {
        self.validate()?;
        match self {
            ModelParams::DavisLo(m) => Ok(davis_lo_pmf(m, n)),
            ModelParams::Torri(m) => Ok(torri_pmf(m, n)),
            ModelParams::Vasicek(m) => vasicek_pmf(m, n, quad),
        }
    }

    /// `ln P(L = h)` for each `h` in `counts`, without building the whole
    /// distribution. Vasicek uses a fixed grid level.
    pub fn log_probs_at(&self, n: usize, counts: &[usize], level: u32) -> Vec<f64> {
        match self {
            ModelParams::DavisLo(m) => davis_lo_log_probs_at(m, n, counts),
            ModelParams::Torri(m) => torri_log_probs_at(m, n, counts),
            ModelParams::Vasicek(m) => vasicek_log_probs_at(m, n, counts, level),
        }
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelParams::DavisLo(m) => write!(f, "davislo:p={},q={}", m.p, m.q),
            ModelParams::Torri(m) => write!(f, "torri:p={},u={},v={}", m.p, m.u, m.v),
            ModelParams::Vasicek(m) => write!(f, "vasicek:p={},rho={}", m.p, m.rho_a),
        }
    }
}

/// Parses `davislo:p=..,q=..`, `torri:p=..,u=..,v=..` or
/// `vasicek:p=..,rho=..`.
impl FromStr for ModelParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("model spec '{s}' lacks ':'")))?;
        let family: Family = head.parse()?;
        let fields = parse_fields(rest)?;
        let get = |keys: &[&str]| -> Result<f64> {
            keys.iter()
                .find_map(|k| fields.iter().find(|(name, _)| name == k).map(|(_, v)| *v))
                .ok_or_else(|| Error::Domain(format!("model spec '{s}' lacks {}", keys[0])))
        };
        let params = match family {
            Family::DavisLo => ModelParams::DavisLo(DavisLo {
                p: get(&["p"])?,
                q: get(&["q"])?,
            }),
            Family::Torri => ModelParams::Torri(Torri {
                p: get(&["p"])?,
                u: get(&["u"])?,
                v: get(&["v"])?,
            }),
            Family::Vasicek => ModelParams::Vasicek(Vasicek {
                p: get(&["p"])?,
                rho_a: get(&["rho", "rho_a"])?,
            }),
        };
        params.validate()?;
        Ok(params)
    }
}

pub(crate) fn parse_fields(rest: &str) -> Result<Vec<(String, f64)>> {
    rest.split(',')
        .filter(|f| !f.trim().is_empty())
        .map(|f| {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("field '{f}' is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("field '{f}' has a non-numeric value")))?;
            Ok((k.trim().to_ascii_lowercase(), v))
        })
        .collect()
}

/// `(ln x, ln(1-x))` with exact endpoint handling.
#[inline]
pub(crate) fn ln_pair(x: f64) -> (f64, f64) {
    (x.ln(), (-x).ln_1p())
}

/// `k ln x` with `0 ln 0 = 0`.
#[inline]
pub(crate) fn pow_ln(k: usize, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}
