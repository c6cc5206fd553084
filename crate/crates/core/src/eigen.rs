//! Lowest eigenpairs of symmetric tridiagonal operators.
//!
//! Eigenvalues are bracketed by Sturm-sequence bisection, eigenvectors
//! follow from inverse iteration on a pivoted tridiagonal LU factorization,
//! and the reported energy is the Rayleigh quotient of the final vector.

use thiserror::Error;

use crate::grid::{Grid, GridError, Wavefunction};
use crate::operator::TridiagonalOperator;

/// Relative residual bound: `‖Hψ - εψ‖∞ ≤ RESIDUAL_TOLERANCE (1 + |ε|)`,
/// see [`residual_tolerance`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Residual accepted for an eigenpair with energy `energy` of an operator
/// with sup norm `op_norm` and a quadrature-normalized vector with sup norm
/// `psi_max`. This is `RESIDUAL_TOLERANCE (1 + |ε|)` unless that falls below
/// the rounding floor `4 eps ‖H‖ ‖ψ‖∞` that even the correctly rounded
/// eigenvector cannot beat, which happens when a constant shift moves `ε`
/// close to zero.
pub fn residual_tolerance(energy: f64, op_norm: f64, psi_max: f64) -> f64 {
    (RESIDUAL_TOLERANCE * (1.0 + energy.abs())).max(4.0 * f64::EPSILON * op_norm * psi_max)
}
/// Inverse-iteration steps allowed per eigenpair.
pub const DEFAULT_MAX_STEPS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("operator dimension {operator} does not match grid interior {grid}")]
    DimensionMismatch { operator: usize, grid: usize },
    #[error("requested {k} eigenpairs of a {dim}-dimensional operator")]
    BadCount { k: usize, dim: usize },
    #[error("operator has non-finite entries")]
    NonFinite,
    #[error("eigenpair {index}: residual {residual:e} above tolerance after {steps} inverse-iteration steps")]
    NotConverged {
        index: usize,
        residual: f64,
        steps: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// An energy and its quadrature-normalized eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub energy: f64,
    pub vector: Wavefunction,
}

/// Algebraically smallest eigenpair.
pub fn ground_state(op: &TridiagonalOperator, grid: &Grid) -> Result<Eigenpair, EigenError> {
    let mut pairs = lowest_k_with(op, grid, 1, DEFAULT_MAX_STEPS)?;
    Ok(pairs.remove(0))
}

/// The `k` smallest eigenpairs in ascending order.
pub fn lowest_k(op: &TridiagonalOperator, grid: &Grid, k: usize) -> Result<Vec<Eigenpair>, EigenError> {
    lowest_k_with(op, grid, k, DEFAULT_MAX_STEPS)
}

pub fn lowest_k_with(
    op: &TridiagonalOperator,
    grid: &Grid,
    k: usize,
    max_steps: usize,
) -> Result<Vec<Eigenpair>, EigenError> {
    let dim = op.dim();
    if dim != grid.interior_len() {
        return Err(EigenError::DimensionMismatch {
            operator: dim,
            grid: grid.interior_len(),
        });
    }
    if k == 0 || k > dim {
        return Err(EigenError::BadCount { k, dim });
    }
    let d = op.diagonal();
    let e = op.off_diagonal();
    if d.iter().chain(e).any(|x| !x.is_finite()) {
        return Err(EigenError::NonFinite);
    }

    let (lo, hi) = gershgorin(d, e);
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
    let pivmin = f64::MIN_POSITIVE * e2.iter().fold(1.0f64, |m, x| m.max(*x));
    let h = grid.spacing();

    let mut found: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut pairs = Vec::with_capacity(k);
    let abs_tol = 2.0 * f64::EPSILON * norm;
    let midpoint = |(a, b): (f64, f64)| a + 0.5 * (b - a);

    // The Rayleigh quotient of the smooth half-sine bounds the ground energy
    // from above, which saves most of the bisection range.
    let sine: Vec<f64> = (1..=dim)
        .map(|j| (std::f64::consts::PI * j as f64 / (dim + 1) as f64).sin())
        .collect();
    let bound = op.quadratic_form(&sine) / sine.iter().map(|v| v * v).sum::<f64>();
    let first_hi = (bound + 4.0 * abs_tol).min(hi);
    let first_hi = if first_hi.is_finite() && sturm_count(d, &e2, first_hi, pivmin) > 0 {
        first_hi
    } else {
        hi
    };
    let mut bracket = (lo, first_hi);
    for index in 0..k {
        let (a, b) = bisect(d, &e2, index, bracket, pivmin, abs_tol, |_, _| false);
        let lambda = midpoint((a, b));
        // The next eigenvalue only needs to be good enough to set the
        // refinement shift; its bracket is reused for the next index.
        let gap = if index + 1 < dim {
            bracket = bisect(d, &e2, index + 1, (a, hi), pivmin, abs_tol, |a, b| b - a <= 0.05 * (a - lambda));
            midpoint(bracket) - lambda
        } else {
            norm
        }
        .max(16.0 * abs_tol);

        // Inverse iteration at the eigenvalue itself. Rounding in the
        // near-singular solve leaves a smooth error of order eps ‖H‖ / λ.
        let lu = TridiagonalLu::factor(d, e, lambda, norm);
        let mut x = start_vector(dim, index);
        orthonormalize(&mut x, &found);
        let mut best: Option<Candidate> = None;
        let mut steps = 0;
        let keep = |x: &[f64], best: &mut Option<Candidate>| {
            let c = Candidate::new(op, x, h, norm);
            let out = (c.residual, c.accepted());
            if best.as_ref().is_none_or(|b| c.residual < b.residual) {
                *best = Some(c);
            }
            out
        };
        let mut previous = f64::INFINITY;
        while steps < max_steps {
            steps += 1;
            let mut y = lu.solve(&x);
            if y.iter().any(|v| !v.is_finite()) {
                y = start_vector(dim, index + steps);
            }
            orthonormalize(&mut y, &found);
            fix_sign(&mut y);
            x = y;
            let (residual, accepted) = keep(&x, &mut best);
            if steps >= 2 && (accepted || residual > 0.5 * previous) {
                break;
            }
            previous = residual;
        }

        // Residual correction with a shift half a gap below, which is well
        // conditioned on everything above the target.
        let refine = TridiagonalLu::factor(d, e, lambda - 0.5 * gap, norm);
        let mut refinements = 0;
        while refinements < max_steps {
            let current = best.as_ref().expect("at least one step");
            if current.accepted() && refinements > 0 {
                break;
            }
            let (energy, before) = (current.energy, current.residual);
            refinements += 1;
            let hx = op.apply(&x);
            let r: Vec<f64> = hx.iter().zip(&x).map(|(a, b)| a - energy * b).collect();
            let t = refine.solve(&r);
            for (xi, ti) in x.iter_mut().zip(&t) {
                *xi -= ti;
            }
            orthonormalize(&mut x, &found);
            fix_sign(&mut x);
            let (residual, _) = keep(&x, &mut best);
            if residual >= before && refinements >= 3 {
                break;
            }
        }
        steps += refinements;

        let best = best.expect("at least one step");
        if !best.accepted() {
            return Err(EigenError::NotConverged {
                index,
                residual: best.residual,
                steps,
            });
        }
        let vector = best.vector;
        let wave = Wavefunction::from_interior(*grid, &vector)?;
        let energy = op.expectation(&wave);
        found.push(vector);
        pairs.push(Eigenpair { energy, vector: wave });
    }
    Ok(pairs)
}

/// Number of eigenvalues strictly below `x` (negative pivots of the LDLᵀ
/// factorization of `T - x I`). `e2` holds the squared off-diagonal.
pub fn sturm_count(d: &[f64], e2: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e2[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - left - right);
        hi = hi.max(d[i] + left + right);
    }
    let pad = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + f64::MIN_POSITIVE;
    (lo - pad, hi + pad)
}

/// Sturm counts at several shifts in one interleaved sweep.
fn sturm_counts<const M: usize>(d: &[f64], e2: &[f64], x: [f64; M], pivmin: f64) -> [usize; M] {
    let mut count = [0; M];
    let mut q = [0.0; M];
    for j in 0..M {
        q[j] = d[0] - x[j];
        if q[j].abs() < pivmin {
            q[j] = -pivmin;
        }
        count[j] += (q[j] < 0.0) as usize;
    }
    for i in 1..d.len() {
        for j in 0..M {
            q[j] = d[i] - x[j] - e2[i - 1] / q[j];
            if q[j].abs() < pivmin {
                q[j] = -pivmin;
            }
            count[j] += (q[j] < 0.0) as usize;
        }
    }
    count
}

/// Multisection bracket `(a, b)` of the `k`-th eigenvalue, narrowed until
/// `done(a, b)` holds or the bracket is at rounding level. Each sweep
/// evaluates three interior points.
fn bisect(
    d: &[f64],
    e2: &[f64],
    k: usize,
    (mut a, mut b): (f64, f64),
    pivmin: f64,
    abs_tol: f64,
    done: impl Fn(f64, f64) -> bool,
) -> (f64, f64) {
    for _ in 0..512 {
        let w = b - a;
        let x = [a + 0.25 * w, a + 0.5 * w, a + 0.75 * w];
        if x[0] <= a || x[2] >= b || w <= abs_tol || done(a, b) {
            break;
        }
        let c = sturm_counts(d, e2, x, pivmin);
        let (mut na, mut nb) = (a, b);
        for j in 0..3 {
            if c[j] > k {
                nb = x[j];
                break;
            }
            na = x[j];
        }
        a = na;
        b = nb;
    }
    (a, b)
}

/// LU factorization with partial pivoting of `T - shift I`.
struct TridiagonalLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(d: &[f64], e: &[f64], shift: f64, norm: f64) -> Self {
        let n = d.len();
        let tiny = f64::EPSILON * norm;
        let mut diag: Vec<f64> = d.iter().map(|x| x - shift).collect();
        let mut lower = e.to_vec();
        let mut upper = e.to_vec();
        let mut upper2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if diag[i].abs() >= lower[i].abs() {
                if diag[i] == 0.0 {
                    diag[i] = tiny;
                }
                let fact = lower[i] / diag[i];
                lower[i] = fact;
                diag[i + 1] -= fact * upper[i];
            } else {
                let fact = diag[i] / lower[i];
                diag[i] = lower[i];
                lower[i] = fact;
                let temp = upper[i];
                upper[i] = diag[i + 1];
                diag[i + 1] = temp - fact * diag[i + 1];
                if i + 2 < n {
                    upper2[i] = upper[i + 1];
                    upper[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if n > 0 && diag[n - 1] == 0.0 {
            diag[n - 1] = tiny;
        }
        TridiagonalLu {
            lower,
            diag,
            upper,
            upper2,
            swapped,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i] - self.lower[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.lower[i] * b[i];
            }
        }
        b[n - 1] /= self.diag[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.upper[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1] - self.upper2[i] * b[i + 2]) / self.diag[i];
        }
        b
    }
}

/// Deterministic start vector with a nonzero component along every
/// eigenvector of a smooth operator.
fn start_vector(n: usize, seed: usize) -> Vec<f64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15 ^ (seed as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            1.0 + 0.5 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect()
}

fn orthonormalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= dot * bi;
            }
        }
    }
    let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale > 0.0 {
        for xi in x.iter_mut() {
            *xi /= scale;
        }
    }
}

/// Largest-magnitude component positive (first one on ties).
fn fix_sign(x: &mut [f64]) {
    let mut pivot = 0.0f64;
    for v in x.iter() {
        if v.abs() > pivot.abs() {
            pivot = *v;
        }
    }
    if pivot < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Rayleigh quotient, sup-norm residual, and residual tolerance of the
/// quadrature-normalized version of a Euclidean-normalized vector.
struct Candidate {
    energy: f64,
    vector: Vec<f64>,
    residual: f64,
    tolerance: f64,
}

impl Candidate {
    fn new(op: &TridiagonalOperator, x: &[f64], h: f64, op_norm: f64) -> Self {
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let energy = op.quadratic_form(x) / norm2;
        let scale = (norm2 * h).sqrt().recip();
        let hx = op.apply(x);
        let residual = hx
            .iter()
            .zip(x)
            .map(|(a, b)| ((a - energy * b) * scale).abs())
            .fold(0.0, f64::max);
        let psi_max = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
        Candidate {
            energy,
            vector: x.to_vec(),
            residual,
            tolerance: residual_tolerance(energy, op_norm, psi_max),
        }
    }

    fn accepted(&self) -> bool {
        self.residual <= self.tolerance
    }
}

/// Sup-norm residual `‖Hψ - εψ‖∞` of an eigenpair.
pub fn residual(op: &TridiagonalOperator, pair: &Eigenpair) -> f64 {
    let psi = pair.vector.interior();
    op.apply(psi)
        .iter()
        .zip(psi)
        .map(|(a, b)| (a - pair.energy * b).abs())
        .fold(0.0, f64::max)
}

/// Cyclic Jacobi eigenvalues of a dense symmetric matrix, ascending. Used as
/// an independent oracle for the tridiagonal solver.
pub fn dense_symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off == 0.0 || off <= 1e-40 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-18 * (a[p][p].abs() + a[q][q].abs()) {
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = (t * t + 1.0).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}
