//! Uniform discretization of the return axis `[-0.10, 0.10]` and the
//! node-sampled functions that live on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{RETURN_MAX, RETURN_MIN};

/// Tolerance on unit normalization of wavefunctions and densities.
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("function has zero norm")]
    ZeroNorm,
    #[error("boundary values must be zero (got {left}, {right})")]
    NonZeroBoundary { left: f64, right: f64 },
    #[error("density has a negative value {value} at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("integral {0} differs from 1")]
    NotNormalized(f64),
}

/// Uniform grid with exact endpoints `±0.10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self, GridError> {
        if n_points < 3 {
            return Err(GridError::TooFewPoints(n_points));
        }
        Ok(Grid {
            n_points,
            spacing: (RETURN_MAX - RETURN_MIN) / (n_points - 1) as f64,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Number of nodes strictly inside the domain.
    pub fn interior_len(&self) -> usize {
        self.n_points - 2
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn r_min(&self) -> f64 {
        RETURN_MIN
    }

    pub fn r_max(&self) -> f64 {
        RETURN_MAX
    }

    pub fn length(&self) -> f64 {
        RETURN_MAX - RETURN_MIN
    }

    /// Position of node `i`. Nodes are placed symmetrically so that
    /// `node(i) == -node(n - 1 - i)` holds exactly.
    pub fn node(&self, i: usize) -> f64 {
        let last = self.n_points - 1;
        if i == 0 {
            RETURN_MIN
        } else if i == last {
            RETURN_MAX
        } else {
            (2.0 * i as f64 - last as f64) * (0.5 * self.spacing)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.node(i))
    }

    /// Index of the node closest to `r`.
    pub fn nearest(&self, r: f64) -> usize {
        let pos = ((r - RETURN_MIN) / self.spacing).round();
        (pos.max(0.0) as usize).min(self.n_points - 1)
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_points - 1 {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }
}

/// A scalar sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_points(),
                found: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &GridFunction, beta: f64) -> Result<Self, GridError> {
        if other.values.len() != self.values.len() {
            return Err(GridError::LengthMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }
}

/// Composite trapezoidal rule over `[r_min, r_max]`.
pub fn quadrature(f: &GridFunction) -> f64 {
    trapezoid(f.grid(), f.values())
}

pub(crate) fn trapezoid(grid: &Grid, values: &[f64]) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    grid.spacing() * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Real wavefunction with zero boundary values and unit quadrature norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefunction(GridFunction);

impl Wavefunction {
    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.0
    }

    /// Interior node values (boundary zeros stripped).
    pub fn interior(&self) -> &[f64] {
        let v = self.0.values();
        &v[1..v.len() - 1]
    }

    /// Builds a wavefunction from interior values, scaling to unit norm.
    pub fn from_interior(grid: Grid, interior: &[f64]) -> Result<Self, GridError> {
        if interior.len() != grid.interior_len() {
            return Err(GridError::LengthMismatch {
                expected: grid.interior_len(),
                found: interior.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.n_points());
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        normalize(&GridFunction { grid, values })
    }

    /// `∫ ψ φ dr` by the trapezoid rule.
    pub fn overlap(&self, other: &Wavefunction) -> f64 {
        let prod: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .collect();
        trapezoid(self.grid(), &prod)
    }
}

/// Scales `f` to unit quadrature norm. Boundary values must be zero.
pub fn normalize(f: &GridFunction) -> Result<Wavefunction, GridError> {
    let v = f.values();
    let (left, right) = (v[0], v[v.len() - 1]);
    if left != 0.0 || right != 0.0 {
        return Err(GridError::NonZeroBoundary { left, right });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(GridError::NonFinite(i));
    }
    let squares: Vec<f64> = v.iter().map(|x| x * x).collect();
    let norm2 = trapezoid(f.grid(), &squares);
    if norm2 <= 0.0 || !norm2.is_finite() {
        return Err(GridError::ZeroNorm);
    }
    let scale = norm2.sqrt().recip();
    Ok(Wavefunction(f.map(|x| x * scale)))
}

/// Nonnegative node-sampled probability density with unit integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density(GridFunction);

impl Density {
    /// Validates an already-normalized density.
    pub fn new(f: GridFunction) -> Result<Self, GridError> {
        check_nonnegative(&f)?;
        let total = quadrature(&f);
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(GridError::NotNormalized(total));
        }
        Ok(Density(f))
    }

    /// Rescales a nonnegative function to unit integral.
    pub fn renormalized(f: GridFunction) -> Result<Self, GridError> {
        check_nonnegative(&f)?;
        let total = quadrature(&f);
        if total <= 0.0 || !total.is_finite() {
            return Err(GridError::ZeroNorm);
        }
        let scale = total.recip();
        Ok(Density(f.map(|x| x * scale)))
    }

    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.0
    }

    /// `∫ |self - other| dr`.
    pub fn l1_distance(&self, other: &Density) -> f64 {
        let diff: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .collect();
        trapezoid(self.grid(), &diff)
    }
}

fn check_nonnegative(f: &GridFunction) -> Result<(), GridError> {
    for (node, &value) in f.values().iter().enumerate() {
        if !value.is_finite() {
            return Err(GridError::NonFinite(node));
        }
        if value < 0.0 {
            return Err(GridError::NegativeDensity { node, value });
        }
    }
    Ok(())
}

/// Born density `|ψ|²`.
pub fn density_of(psi: &Wavefunction) -> Density {
    Density(psi.as_function().map(|x| x * x))
}

/// Mean return `∫ r n(r) dr`.
pub fn first_moment(n: &Density) -> f64 {
    let grid = n.grid();
    let weighted: Vec<f64> = n
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| grid.node(i) * v)
        .collect();
    trapezoid(grid, &weighted)
}
