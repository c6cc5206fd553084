//! Discretized single-instrument Hamiltonians.
//!
//! Every Hamiltonian acts on the interior nodes of a [`Grid`] (Dirichlet walls
//! at `±0.10`) and is the sum of a central-difference kinetic term and a
//! diagonal potential. All interaction potentials are built from regression
//! links and are affine in the return: a link `z -> i` with source position
//! `x` contributes `a + k x - r`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{first_moment, trapezoid, Density, Grid, GridFunction, Wavefunction};
use crate::stats::{Mass, RegressionLink};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("dimension mismatch: operator {operator}, potential {potential}")]
    DimensionMismatch { operator: usize, potential: usize },
    #[error("off-diagonal length {off} does not fit diagonal length {diag}")]
    BadShape { diag: usize, off: usize },
}

/// Real symmetric tridiagonal matrix stored by its two diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalOperator {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self, OperatorError> {
        if diagonal.is_empty() || off_diagonal.len() + 1 != diagonal.len() {
            return Err(OperatorError::BadShape {
                diag: diagonal.len(),
                off: off_diagonal.len(),
            });
        }
        Ok(TridiagonalOperator {
            diagonal,
            off_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    /// `H x` for a vector over the interior nodes, evaluated as row sum times
    /// `x_i` plus off-diagonal weighted differences, so a kinetic stencil
    /// never forms large cancelling products.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let (d, e) = (&self.diagonal, &self.off_diagonal);
        (0..n)
            .map(|i| {
                let mut row = d[i];
                let mut y = 0.0;
                if i > 0 {
                    row += e[i - 1];
                    y += e[i - 1] * (x[i - 1] - x[i]);
                }
                if i + 1 < n {
                    row += e[i];
                    y += e[i] * (x[i + 1] - x[i]);
                }
                row * x[i] + y
            })
            .collect()
    }

    /// `xᵀ H x`, evaluated as row sums times `x²` minus off-diagonal weighted
    /// squared differences. For a kinetic term the row sums vanish in the
    /// interior, so no large cancelling products appear.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let (d, e) = (&self.diagonal, &self.off_diagonal);
        let mut diag_part = 0.0;
        for i in 0..n {
            let mut row = d[i];
            if i > 0 {
                row += e[i - 1];
            }
            if i + 1 < n {
                row += e[i];
            }
            diag_part += row * x[i] * x[i];
        }
        let grad_part: f64 = e
            .iter()
            .enumerate()
            .map(|(i, ei)| {
                let dx = x[i + 1] - x[i];
                ei * dx * dx
            })
            .sum();
        diag_part - grad_part
    }

    /// `⟨ψ|H|ψ⟩` with the grid quadrature.
    pub fn expectation(&self, psi: &Wavefunction) -> f64 {
        psi.grid().spacing() * self.quadratic_form(psi.interior())
    }

    /// `H + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        TridiagonalOperator {
            diagonal: self.diagonal.iter().map(|d| d + c).collect(),
            off_diagonal: self.off_diagonal.clone(),
        }
    }

    /// `H + diag(v)` over the interior nodes of a full-grid potential.
    pub fn with_potential(&self, potential: &GridFunction) -> Result<Self, OperatorError> {
        let v = potential.values();
        if v.len() != self.dim() + 2 {
            return Err(OperatorError::DimensionMismatch {
                operator: self.dim(),
                potential: v.len(),
            });
        }
        Ok(TridiagonalOperator {
            diagonal: self
                .diagonal
                .iter()
                .zip(&v[1..v.len() - 1])
                .map(|(d, p)| d + p)
                .collect(),
            off_diagonal: self.off_diagonal.clone(),
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diagonal[i];
            if i + 1 < n {
                m[i][i + 1] = self.off_diagonal[i];
                m[i + 1][i] = self.off_diagonal[i];
            }
        }
        m
    }
}

/// Central second difference for `-ħ²/(2m) d²/dr²` with the boundary rows
/// eliminated: diagonal `ħ²/(m h²)`, off-diagonal `-ħ²/(2m h²)`.
pub fn kinetic_matrix(grid: &Grid, mass: Mass, hbar: f64) -> TridiagonalOperator {
    let n = grid.interior_len();
    let mh2 = mass.value() * grid.spacing() * grid.spacing();
    let hbar2 = hbar * hbar;
    let diag = hbar2 / mh2;
    let off = -(hbar2 / (2.0 * mh2));
    TridiagonalOperator {
        diagonal: vec![diag; n],
        off_diagonal: vec![off; n - 1],
    }
}

/// Diagonal contributions to one instrument's Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialBundle {
    /// Index-to-stock term `v(r)`.
    pub external: GridFunction,
    /// Density-averaged stock-to-stock term `V(r)`.
    pub hartree: GridFunction,
    /// Index-index interaction, a constant under clamped indexes.
    pub nuclear_constant: f64,
}

impl PotentialBundle {
    pub fn zero(grid: Grid) -> Self {
        PotentialBundle {
            external: GridFunction::zeros(grid),
            hartree: GridFunction::zeros(grid),
            nuclear_constant: 0.0,
        }
    }
}

/// `Σ (a + k x_src - r)` over the active links, with `x_src` the given
/// source position. Built as `C - count · r`, so the result is exactly affine.
pub fn affine_link_potential<'a>(
    grid: &Grid,
    sources: impl IntoIterator<Item = (&'a RegressionLink, f64)>,
) -> GridFunction {
    let mut constant = 0.0;
    let mut count = 0usize;
    for (link, position) in sources {
        if link.active {
            constant += link.prediction(position);
            count += 1;
        }
    }
    if count == 0 {
        return GridFunction::zeros(*grid);
    }
    let slope = count as f64;
    GridFunction::from_fn(*grid, |r| constant - slope * r)
}

/// Index-to-stock potential with indexes clamped at the given returns.
pub fn external_potential(grid: &Grid, index_links: &[(&RegressionLink, f64)]) -> GridFunction {
    affine_link_potential(grid, index_links.iter().copied())
}

/// Stock-to-stock potential `Σ_z ∫ n_z(x) D_z(x, r) dx`. Because `D` is
/// affine in `x`, the integral only needs the first moment of `n_z`.
pub fn hartree_potential(grid: &Grid, stock_links: &[(&RegressionLink, &Density)]) -> GridFunction {
    affine_link_potential(
        grid,
        stock_links
            .iter()
            .map(|(link, density)| (*link, first_moment(density))),
    )
}

/// Index-index interaction `Σ (a + k R_src - R_tgt)` for clamped positions
/// given as `(link, R_src, R_tgt)`.
pub fn nuclear_repulsion(index_links: &[(&RegressionLink, f64, f64)]) -> f64 {
    index_links
        .iter()
        .map(|(link, src, tgt)| link.interaction(*src, *tgt))
        .fold(0.0, |acc, x| acc + x)
}

/// Kinetic term plus every potential in the bundle, on the diagonal.
pub fn assemble(
    kinetic: &TridiagonalOperator,
    bundle: &PotentialBundle,
) -> Result<TridiagonalOperator, OperatorError> {
    for f in [&bundle.external, &bundle.hartree] {
        if f.values().len() != kinetic.dim() + 2 {
            return Err(OperatorError::DimensionMismatch {
                operator: kinetic.dim(),
                potential: f.values().len(),
            });
        }
    }
    let ext = &bundle.external.values()[1..];
    let har = &bundle.hartree.values()[1..];
    let diagonal = kinetic
        .diagonal
        .iter()
        .enumerate()
        .map(|(i, d)| d + (ext[i] + har[i] + bundle.nuclear_constant))
        .collect();
    Ok(TridiagonalOperator {
        diagonal,
        off_diagonal: kinetic.off_diagonal.clone(),
    })
}

/// How index instruments are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Indexes are clamped at fixed returns and carry no density.
    #[default]
    BornOppenheimer,
    /// Indexes carry densities and are solved in the SCF loop.
    Dynamic,
}

/// Hamiltonian of an index: kinetic plus the density-averaged interaction
/// from heavier indexes. Clamped indexes have none.
pub fn index_hamiltonian(
    grid: &Grid,
    mass: Mass,
    hbar: f64,
    index_links: &[(&RegressionLink, &Density)],
    mode: IndexMode,
) -> Option<TridiagonalOperator> {
    match mode {
        IndexMode::BornOppenheimer => None,
        IndexMode::Dynamic => {
            let kinetic = kinetic_matrix(grid, mass, hbar);
            let bundle = PotentialBundle {
                hartree: hartree_potential(grid, index_links),
                ..PotentialBundle::zero(*grid)
            };
            Some(assemble(&kinetic, &bundle).expect("potentials are sampled on the same grid"))
        }
    }
}

/// Trapezoid integral of `n(r) v(r)`.
pub fn potential_expectation(density: &Density, potential: &GridFunction) -> f64 {
    let prod: Vec<f64> = density
        .values()
        .iter()
        .zip(potential.values())
        .map(|(n, v)| n * v)
        .collect();
    trapezoid(density.grid(), &prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{density_of, normalize};
    use std::f64::consts::PI;

    fn link(a: f64, k: f64) -> RegressionLink {
        RegressionLink {
            source: "s".into(),
            target: "t".into(),
            rho: 0.5,
            intercept_a: a,
            slope_k: k,
            active: true,
        }
    }

    fn mass(v: f64) -> Mass {
        Mass::new(v).unwrap()
    }

    fn density_with_moment(grid: Grid, shift: f64) -> Density {
        // Smooth bump; its first moment is computed numerically by callers.
        let f = GridFunction::from_fn(grid, |r| (-(r - shift) * (r - shift) / 0.0002).exp());
        Density::renormalized(f).unwrap()
    }

    #[test]
    fn kinetic_entries_and_symmetry() {
        let g = Grid::new(11).unwrap();
        let k = kinetic_matrix(&g, mass(0.0005), 1.0);
        let h2 = g.spacing() * g.spacing();
        assert_eq!(k.dim(), 9);
        assert!((k.diagonal()[0] - 1.0 / (0.0005 * h2)).abs() < 1e-6);
        assert!((k.off_diagonal()[0] + 0.5 / (0.0005 * h2)).abs() < 1e-6);
        assert_eq!(k.diagonal()[0], -2.0 * k.off_diagonal()[0]);
        let dense = k.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(dense[i][j], dense[j][i]);
            }
        }
        let heavy = kinetic_matrix(&g, mass(0.001), 1.0);
        for (a, b) in heavy.diagonal().iter().zip(k.diagonal()) {
            assert_eq!(2.0 * a, *b);
        }
        for (a, b) in heavy.off_diagonal().iter().zip(k.off_diagonal()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn quadratic_form_matches_apply() {
        let g = Grid::new(51).unwrap();
        let op = kinetic_matrix(&g, mass(0.0007), 0.3)
            .with_potential(&GridFunction::from_fn(g, |r| 40.0 * r + 3.0))
            .unwrap();
        let x: Vec<f64> = (0..op.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let direct: f64 = op.apply(&x).iter().zip(&x).map(|(a, b)| a * b).sum();
        let form = op.quadratic_form(&x);
        assert!((direct - form).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn external_potential_examples() {
        let g = Grid::new(21).unwrap();
        let none = external_potential(&g, &[]);
        assert!(none.values().iter().all(|v| *v == 0.0));

        let l = link(0.001, 0.5);
        let v = external_potential(&g, &[(&l, 0.002)]);
        for (i, val) in v.values().iter().enumerate() {
            assert!((val - (0.002 - g.node(i))).abs() < 1e-15);
        }
        let twice = external_potential(&g, &[(&l, 0.002), (&l, 0.002)]);
        for (a, b) in twice.values().iter().zip(v.values()) {
            assert_eq!(*a, 2.0 * b);
        }
        let off = RegressionLink { active: false, ..l };
        assert!(external_potential(&g, &[(&off, 0.05)]).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hartree_potential_examples() {
        let g = Grid::new(2001).unwrap();
        assert!(hartree_potential(&g, &[]).values().iter().all(|v| *v == 0.0));

        // Density with first moment 0.002: a narrow bump placed so that the
        // discrete moment is exactly what the link sees.
        let n = density_with_moment(g, 0.002);
        let mu = first_moment(&n);
        assert!((mu - 0.002).abs() < 1e-9);
        let l = link(0.001, 0.4);
        let v = hartree_potential(&g, &[(&l, &n)]);
        for (i, val) in v.values().iter().enumerate() {
            let expected = 0.001 + 0.4 * mu - g.node(i);
            assert!((val - expected).abs() < 1e-15);
            assert!((val - (0.0018 - g.node(i))).abs() < 1e-9);
        }
    }

    #[test]
    fn hartree_depends_only_on_first_moment() {
        let g = Grid::new(401).unwrap();
        let a = density_with_moment(g, 0.01);
        // Symmetric two-bump density with the same mean.
        let mu = first_moment(&a);
        let b = Density::renormalized(GridFunction::from_fn(g, |r| {
            (-(r - mu - 0.03).powi(2) / 0.0002).exp() + (-(r - mu + 0.03).powi(2) / 0.0002).exp()
        }))
        .unwrap();
        let shift = first_moment(&b) - mu;
        let l = link(0.003, -0.7);
        let va = hartree_potential(&g, &[(&l, &a)]);
        let vb = hartree_potential(&g, &[(&l, &b)]);
        for (x, y) in va.values().iter().zip(vb.values()) {
            assert!((x - y).abs() <= 0.7 * shift.abs() + 1e-12);
        }
    }

    #[test]
    fn nuclear_repulsion_examples() {
        assert_eq!(nuclear_repulsion(&[]), 0.0);
        let l = link(0.001, 1.0);
        assert!((nuclear_repulsion(&[(&l, 0.002, 0.001)]) - 0.002).abs() < 1e-18);
        let off = RegressionLink { active: false, ..l };
        assert_eq!(nuclear_repulsion(&[(&off, 0.002, 0.001), (&off, 0.1, -0.1)]), 0.0);
    }

    #[test]
    fn assemble_examples() {
        let g = Grid::new(31).unwrap();
        let k = kinetic_matrix(&g, mass(0.0006), 1.0);
        assert_eq!(assemble(&k, &PotentialBundle::zero(g)).unwrap(), k);

        let bundle = PotentialBundle {
            nuclear_constant: 3.25,
            ..PotentialBundle::zero(g)
        };
        let shifted = assemble(&k, &bundle).unwrap();
        for (a, b) in shifted.diagonal().iter().zip(k.diagonal()) {
            assert_eq!(*a, b + 3.25);
        }
        assert_eq!(shifted.off_diagonal(), k.off_diagonal());

        let other = Grid::new(21).unwrap();
        let bad = PotentialBundle::zero(other);
        assert!(matches!(assemble(&k, &bad), Err(OperatorError::DimensionMismatch { .. })));
    }

    #[test]
    fn potentials_are_exactly_affine() {
        let g = Grid::new(201).unwrap();
        let links = [link(0.001, 0.3), link(-0.002, 1.7), link(0.0005, -0.4)];
        let pos = [0.01, -0.03, 0.07];
        let pairs: Vec<(&RegressionLink, f64)> = links.iter().zip(pos).collect();
        let v = external_potential(&g, &pairs);
        // least-squares line through the node values
        let xs: Vec<f64> = g.nodes().collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = v.values().iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(v.values()).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        assert!((slope + 3.0).abs() < 1e-12);
        for (x, y) in xs.iter().zip(v.values()) {
            assert!((y - (icpt + slope * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn index_hamiltonian_modes() {
        let g = Grid::new(5).unwrap();
        let m = mass(0.0008);
        let bump = GridFunction::from_fn(g, |r| if r.abs() >= 0.1 { 0.0 } else { (PI * (r + 0.1) / 0.2).sin() });
        let n = density_of(&normalize(&bump).unwrap());
        assert!(index_hamiltonian(&g, m, 1.0, &[], IndexMode::BornOppenheimer).is_none());
        let mono = index_hamiltonian(&g, m, 1.0, &[], IndexMode::Dynamic).unwrap();
        assert_eq!(mono, kinetic_matrix(&g, m, 1.0));

        // Two indexes, heavy -> light with one active link.
        let l = link(0.002, 0.6);
        let heavy = index_hamiltonian(&g, m, 1.0, &[], IndexMode::Dynamic).unwrap();
        let light = index_hamiltonian(&g, m, 1.0, &[(&l, &n)], IndexMode::Dynamic).unwrap();
        assert_eq!(heavy, kinetic_matrix(&g, m, 1.0));

        // Hand-assembled: h = 0.05, interior nodes -0.05, 0, 0.05.
        let h2 = 0.05 * 0.05;
        let c = 1.0 / (0.0008 * h2);
        let mu = first_moment(&n);
        let expected_diag: Vec<f64> = [-0.05, 0.0, 0.05]
            .iter()
            .map(|r| c + (0.002 + 0.6 * mu - r))
            .collect();
        for (a, b) in light.diagonal().iter().zip(&expected_diag) {
            assert!((a - b).abs() <= 1e-9 * c);
            assert!((a - b).abs() < 1e-6);
        }
        for e in light.off_diagonal() {
            assert!((e + 0.5 * c).abs() < 1e-6);
        }
    }
}
