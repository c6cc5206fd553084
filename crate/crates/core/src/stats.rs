//! Pairwise regression links, the residual interaction `D(x, y)`, and the
//! sigmoid capitalization-to-mass mapping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{population_moments, ReturnSeries, Universe};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("regressor {0} has zero standard deviation")]
    ZeroVariance(String),
    #[error("mass mapping needs positive inputs (cap = {cap}, cap_scale = {cap_scale})")]
    NonPositiveCap { cap: f64, cap_scale: f64 },
    #[error("mass {0} outside (0, 0.001]")]
    InvalidMass(f64),
}

/// Correlation coefficient plus a flag for the zero-variance convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub rho: f64,
    /// Set when either series has zero variance; `rho` is then 0.
    pub degenerate: bool,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort(x.len()));
    }
    Ok(())
}

/// Population-moment Pearson correlation of two equal-length samples.
pub fn pearson_values(x: &[f64], y: &[f64]) -> Result<Pearson, StatsError> {
    check_pair(x, y)?;
    let (mx, sx) = population_moments(x);
    let (my, sy) = population_moments(y);
    if sx == 0.0 || sy == 0.0 {
        return Ok(Pearson {
            rho: 0.0,
            degenerate: true,
        });
    }
    let n = x.len() as f64;
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    Ok(Pearson {
        rho: (cov / (sx * sy)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub fn pearson(x: &ReturnSeries, y: &ReturnSeries) -> Result<Pearson, StatsError> {
    pearson_values(&x.returns, &y.returns)
}

/// Least-squares line `y ≈ a + k x` as `(a, k)`, with `k = rho σ(y) / σ(x)`.
pub fn regression_values(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check_pair(x, y)?;
    let (mx, sx) = population_moments(x);
    let (my, sy) = population_moments(y);
    if sx == 0.0 {
        return Err(StatsError::ZeroVariance("x".into()));
    }
    let rho = pearson_values(x, y)?.rho;
    let k = rho * sy / sx;
    Ok((my - k * mx, k))
}

pub fn regression(x: &ReturnSeries, y: &ReturnSeries) -> Result<(f64, f64), StatsError> {
    regression_values(&x.returns, &y.returns).map_err(|e| match e {
        StatsError::ZeroVariance(_) => StatsError::ZeroVariance(x.ticker.clone()),
        other => other,
    })
}

/// Which ordered instrument pairs carry a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPolicy {
    /// `x -> y` only when `cap(x) > cap(y)`.
    MassOrdered,
    /// Both directions for every pair.
    #[default]
    Symmetric,
}

/// Directed interaction: `source` influences `target` through the
/// regression of the target's returns on the source's returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionLink {
    pub source: String,
    pub target: String,
    pub rho: f64,
    pub intercept_a: f64,
    pub slope_k: f64,
    pub active: bool,
}

impl RegressionLink {
    /// Residual potential `a + k x - y`; zero for inactive links.
    pub fn interaction(&self, x: f64, y: f64) -> f64 {
        if self.active {
            self.intercept_a + self.slope_k * x - y
        } else {
            0.0
        }
    }

    /// The value of `a + k x` for active links, 0 otherwise.
    pub fn prediction(&self, x: f64) -> f64 {
        if self.active {
            self.intercept_a + self.slope_k * x
        } else {
            0.0
        }
    }
}

/// `D(x, y)` for one link.
pub fn interaction_d(link: &RegressionLink, x_val: f64, y_val: f64) -> f64 {
    link.interaction(x_val, y_val)
}

/// A correlation of 0 or 1 (within `tol_rho`) switches the link off; -1 does not.
pub fn is_active(rho: f64, tol_rho: f64) -> bool {
    !(rho.abs() <= tol_rho || (rho - 1.0).abs() <= tol_rho)
}

/// Builds the link between two aligned instruments. A constant source series
/// gives the degenerate `rho = 0` link (inactive, `k = 0`, `a = mean(y)`).
pub fn link_between(
    source: &ReturnSeries,
    target: &ReturnSeries,
    tol_rho: f64,
) -> Result<RegressionLink, StatsError> {
    let p = pearson(source, target)?;
    let (intercept_a, slope_k) = if source.sample_std == 0.0 {
        (target.sample_mean, 0.0)
    } else {
        regression(source, target)?
    };
    Ok(RegressionLink {
        source: source.ticker.clone(),
        target: target.ticker.clone(),
        rho: p.rho,
        intercept_a,
        slope_k,
        active: !p.degenerate && is_active(p.rho, tol_rho),
    })
}

/// All links of the universe under `policy`, in (source, target) ticker order.
pub fn build_links(
    universe: &Universe,
    policy: LinkPolicy,
    tol_rho: f64,
) -> Result<Vec<RegressionLink>, StatsError> {
    let inst = &universe.instruments;
    let pairs: Vec<(usize, usize)> = (0..inst.len())
        .flat_map(|s| (0..inst.len()).map(move |t| (s, t)))
        .filter(|&(s, t)| {
            s != t
                && match policy {
                    LinkPolicy::Symmetric => true,
                    LinkPolicy::MassOrdered => inst[s].market_cap() > inst[t].market_cap(),
                }
        })
        .collect();
    pairs
        .par_iter()
        .map(|&(s, t)| link_between(&inst[s].returns, &inst[t].returns, tol_rho))
        .collect()
}

/// Sigmoid-normalized market capitalization, used as inertial mass.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mass(f64);

/// Upper asymptote of the mass mapping.
pub const MASS_CEILING: f64 = 1e-3;

impl Mass {
    /// Accepts values in `(0, 0.001]`. The mapping never reaches 0.001
    /// analytically, but it rounds there in `f64` once `cap / cap_scale`
    /// exceeds roughly 360.
    pub fn new(value: f64) -> Result<Self, StatsError> {
        if value > 0.0 && value <= MASS_CEILING {
            Ok(Mass(value))
        } else {
            Err(StatsError::InvalidMass(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `1 / (1000 (1 + exp(-0.1 cap / cap_scale)))`.
pub fn mass_from_cap(cap: f64, cap_scale: f64) -> Result<Mass, StatsError> {
    if !(cap > 0.0 && cap_scale > 0.0 && cap.is_finite() && cap_scale.is_finite()) {
        return Err(StatsError::NonPositiveCap { cap, cap_scale });
    }
    Ok(Mass(sigmoid_mass(cap / cap_scale)))
}

pub(crate) fn sigmoid_mass(x: f64) -> f64 {
    1.0 / (1000.0 * (1.0 + (-0.1 * x).exp()))
}
