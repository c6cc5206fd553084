//! Self-consistent-field driver and energy assembly.
//!
//! Each density-carrying instrument solves its own single-particle problem
//! in potentials built from the previous iteration's densities (a Jacobi
//! update, so the per-instrument solves are independent and run in
//! parallel). New densities are linearly mixed with the old ones until both
//! the density and the orbital energies stop moving.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{ground_state, EigenError};
use crate::grid::{density_of, first_moment, Density, Grid, GridError, GridFunction, Wavefunction};
use crate::marketdata::{InstrumentKind, Universe};
use crate::operator::{
    affine_link_potential, assemble, kinetic_matrix, potential_expectation, IndexMode,
    OperatorError, PotentialBundle, TridiagonalOperator,
};
use crate::stats::{build_links, mass_from_cap, LinkPolicy, Mass, RegressionLink, StatsError};

#[derive(Debug, Error)]
pub enum ScfError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("eigensolver failed for {ticker}: {source}")]
    Eigen {
        ticker: String,
        #[source]
        source: EigenError,
    },
    #[error("link {source_ticker} -> {target} refers to an unknown instrument")]
    UnknownLinkEndpoint { source_ticker: String, target: String },
    #[error("universe has no density-carrying instrument")]
    NoCarriers,
}

/// Where a clamped index sits on the return axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampMode {
    /// Sample mean of the index's returns.
    #[default]
    MeanReturn,
    /// Last observed return.
    LastReturn,
}

/// Every run parameter. Field names double as configuration-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfConfig {
    pub hbar: f64,
    pub mixing_alpha: f64,
    pub tol_density: f64,
    pub tol_energy: f64,
    pub max_iter: usize,
    pub clamp_mode: ClampMode,
    pub link_policy: LinkPolicy,
    pub index_mode: IndexMode,
    pub n_points: usize,
    pub cap_scale: f64,
    pub tol_rho: f64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            hbar: 1.0,
            mixing_alpha: 0.5,
            tol_density: 1e-8,
            tol_energy: 1e-8,
            max_iter: 200,
            clamp_mode: ClampMode::MeanReturn,
            link_policy: LinkPolicy::Symmetric,
            index_mode: IndexMode::BornOppenheimer,
            n_points: 2001,
            cap_scale: 1e9,
            tol_rho: 1e-12,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<(), ScfError> {
        let positive = [
            ("hbar", self.hbar),
            ("tol_density", self.tol_density),
            ("tol_energy", self.tol_energy),
            ("cap_scale", self.cap_scale),
            ("tol_rho", self.tol_rho),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScfError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.mixing_alpha > 0.0 && self.mixing_alpha <= 1.0) {
            return Err(ScfError::Config(format!(
                "mixing_alpha must lie in (0, 1], got {}",
                self.mixing_alpha
            )));
        }
        if self.max_iter == 0 {
            return Err(ScfError::Config("max_iter must be at least 1".into()));
        }
        if self.n_points < 3 {
            return Err(ScfError::Config(format!(
                "n_points must be at least 3, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; every key is optional, unknown keys
    /// are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self, ScfError> {
        let config: ScfConfig = toml::from_str(text).map_err(|e| ScfError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn grid(&self) -> Result<Grid, ScfError> {
        Ok(Grid::new(self.n_points)?)
    }
}

/// One instrument of the system with its derived mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemInstrument {
    pub ticker: String,
    pub kind: InstrumentKind,
    pub market_cap: f64,
    pub mass: Mass,
    /// Clamped return for indexes under Born–Oppenheimer treatment.
    pub clamped_return: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Position {
    Fixed(f64),
    /// First moment of the density held by this carrier slot.
    Moment(usize),
}

impl Position {
    fn value(self, moments: &[f64]) -> f64 {
        match self {
            Position::Fixed(x) => x,
            Position::Moment(slot) => moments[slot],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    link: usize,
    position: Position,
}

#[derive(Debug, Clone)]
struct Carrier {
    instrument: usize,
    kinetic: TridiagonalOperator,
    external: Vec<Term>,
    hartree: Vec<Term>,
    feels_nuclear: bool,
    coupled: bool,
}

#[derive(Debug, Clone, Copy)]
struct NuclearTerm {
    link: usize,
    source: Position,
    target: Position,
}

/// Instruments, links, and the per-carrier potential recipes of one run.
#[derive(Debug, Clone)]
pub struct ScfSystem {
    grid: Grid,
    instruments: Vec<SystemInstrument>,
    links: Vec<RegressionLink>,
    carriers: Vec<Carrier>,
    nuclear: Vec<NuclearTerm>,
}

impl ScfSystem {
    /// Builds masses, clamped positions, and links from an aligned universe.
    pub fn build(universe: &Universe, config: &ScfConfig) -> Result<Self, ScfError> {
        config.validate()?;
        let instruments = universe
            .instruments
            .iter()
            .map(|inst| {
                let clamped_return = (inst.kind() == InstrumentKind::Index).then(|| match config.clamp_mode {
                    ClampMode::MeanReturn => inst.returns.sample_mean,
                    ClampMode::LastReturn => inst.returns.last().unwrap_or(0.0),
                });
                Ok(SystemInstrument {
                    ticker: inst.ticker().to_string(),
                    kind: inst.kind(),
                    market_cap: inst.market_cap(),
                    mass: mass_from_cap(inst.market_cap(), config.cap_scale)?,
                    clamped_return,
                })
            })
            .collect::<Result<Vec<_>, ScfError>>()?;
        let links = build_links(universe, config.link_policy, config.tol_rho)?;
        Self::from_parts(config.grid()?, instruments, links, config)
    }

    /// Assembles a system from explicit instruments and links.
    pub fn from_parts(
        grid: Grid,
        instruments: Vec<SystemInstrument>,
        links: Vec<RegressionLink>,
        config: &ScfConfig,
    ) -> Result<Self, ScfError> {
        let dynamic = config.index_mode == IndexMode::Dynamic;
        let by_ticker: HashMap<&str, usize> = instruments
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.ticker.as_str(), i))
            .collect();

        let mut slot_of = vec![None; instruments.len()];
        let mut carriers = Vec::new();
        for (i, inst) in instruments.iter().enumerate() {
            if inst.kind == InstrumentKind::Stock || dynamic {
                slot_of[i] = Some(carriers.len());
                carriers.push(Carrier {
                    instrument: i,
                    kinetic: kinetic_matrix(&grid, inst.mass, config.hbar),
                    external: Vec::new(),
                    hartree: Vec::new(),
                    feels_nuclear: inst.kind == InstrumentKind::Stock,
                    coupled: false,
                });
            }
        }
        if carriers.is_empty() {
            return Err(ScfError::NoCarriers);
        }

        let position_of = |i: usize| -> Position {
            match (dynamic, slot_of[i], instruments[i].clamped_return) {
                (true, Some(slot), _) => Position::Moment(slot),
                (_, _, Some(r)) => Position::Fixed(r),
                (_, Some(slot), None) => Position::Moment(slot),
                (_, None, None) => Position::Fixed(0.0),
            }
        };

        let mut nuclear = Vec::new();
        for (idx, link) in links.iter().enumerate() {
            let endpoint = |t: &str| {
                by_ticker.get(t).copied().ok_or_else(|| ScfError::UnknownLinkEndpoint {
                    source_ticker: link.source.clone(),
                    target: link.target.clone(),
                })
            };
            let (s, t) = (endpoint(&link.source)?, endpoint(&link.target)?);
            if !link.active {
                continue;
            }
            let term = Term {
                link: idx,
                position: position_of(s),
            };
            match (instruments[s].kind, instruments[t].kind) {
                (InstrumentKind::Index, InstrumentKind::Stock) => {
                    if let Some(slot) = slot_of[t] {
                        carriers[slot].external.push(term);
                    }
                }
                (InstrumentKind::Stock, InstrumentKind::Stock) => {
                    if let Some(slot) = slot_of[t] {
                        carriers[slot].hartree.push(term);
                    }
                }
                (InstrumentKind::Index, InstrumentKind::Index) => {
                    nuclear.push(NuclearTerm {
                        link: idx,
                        source: position_of(s),
                        target: position_of(t),
                    });
                    if dynamic {
                        if let Some(slot) = slot_of[t] {
                            carriers[slot].hartree.push(term);
                        }
                    }
                }
                // Indexes feel no stock terms.
                (InstrumentKind::Stock, InstrumentKind::Index) => {}
            }
        }

        let coupled_nuclear = nuclear
            .iter()
            .any(|n| matches!(n.source, Position::Moment(_)) || matches!(n.target, Position::Moment(_)));
        for c in &mut carriers {
            c.coupled = c
                .external
                .iter()
                .chain(&c.hartree)
                .any(|t| matches!(t.position, Position::Moment(_)))
                || (c.feels_nuclear && coupled_nuclear);
        }

        Ok(ScfSystem {
            grid,
            instruments,
            links,
            carriers,
            nuclear,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn instruments(&self) -> &[SystemInstrument] {
        &self.instruments
    }

    pub fn links(&self) -> &[RegressionLink] {
        &self.links
    }

    pub fn carrier_count(&self) -> usize {
        self.carriers.len()
    }

    /// The instrument behind each density slot.
    pub fn carrier_instrument(&self, slot: usize) -> &SystemInstrument {
        &self.instruments[self.carriers[slot].instrument]
    }

    /// Whether the carrier's potentials depend on any density.
    pub fn is_coupled(&self, slot: usize) -> bool {
        self.carriers[slot].coupled
    }

    pub fn carrier_kinetic(&self, slot: usize) -> &TridiagonalOperator {
        &self.carriers[slot].kinetic
    }

    /// Index-index interaction constant at the given carrier moments.
    pub fn nuclear_constant(&self, moments: &[f64]) -> f64 {
        self.nuclear
            .iter()
            .map(|n| {
                self.links[n.link].interaction(n.source.value(moments), n.target.value(moments))
            })
            .fold(0.0, |acc, x| acc + x)
    }

    fn affine(&self, terms: &[Term], moments: &[f64]) -> GridFunction {
        affine_link_potential(
            &self.grid,
            terms
                .iter()
                .map(|t| (&self.links[t.link], t.position.value(moments))),
        )
    }

    /// Potentials felt by carrier `slot` at the given carrier moments.
    pub fn bundle(&self, slot: usize, moments: &[f64]) -> PotentialBundle {
        let c = &self.carriers[slot];
        PotentialBundle {
            external: self.affine(&c.external, moments),
            hartree: self.affine(&c.hartree, moments),
            nuclear_constant: if c.feels_nuclear {
                self.nuclear_constant(moments)
            } else {
                0.0
            },
        }
    }

    /// Full Hamiltonian of carrier `slot` at the given moments.
    pub fn hamiltonian(&self, slot: usize, moments: &[f64]) -> Result<TridiagonalOperator, ScfError> {
        Ok(assemble(&self.carriers[slot].kinetic, &self.bundle(slot, moments))?)
    }

    /// Links acting on carrier `slot` through its density-averaged term,
    /// with the source carrier slot when the source carries a density.
    pub fn hartree_links(&self, slot: usize) -> Vec<(&RegressionLink, Option<usize>)> {
        self.carriers[slot]
            .hartree
            .iter()
            .map(|t| {
                let src = match t.position {
                    Position::Moment(s) => Some(s),
                    Position::Fixed(_) => None,
                };
                (&self.links[t.link], src)
            })
            .collect()
    }
}

/// Iteration record of the SCF loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScfState {
    pub iteration: usize,
    /// One density per carrier slot.
    pub densities: Vec<Density>,
    /// Latest ground-state orbital per carrier slot.
    pub orbitals: Vec<Wavefunction>,
    /// Latest ground energy per carrier slot, including the nuclear shift.
    pub orbital_energies: Vec<f64>,
    /// Nuclear constant used in the latest step.
    pub nuclear_shift: f64,
    pub density_residual: f64,
    pub energy_residual: f64,
    pub converged: bool,
}

/// Density of the kinetic-only ground state on `grid`. The shape does not
/// depend on mass or `ħ`, so every instrument starts from the same guess.
pub fn initial_guess(grid: &Grid) -> Result<(Wavefunction, Density), ScfError> {
    let n = grid.interior_len();
    let unit = TridiagonalOperator::new(vec![2.0; n], vec![-1.0; n - 1])?;
    let pair = ground_state(&unit, grid).map_err(|source| ScfError::Eigen {
        ticker: "<initial guess>".into(),
        source,
    })?;
    let density = density_of(&pair.vector);
    Ok((pair.vector, density))
}

impl ScfState {
    pub fn initial(system: &ScfSystem) -> Result<Self, ScfError> {
        let (psi, density) = initial_guess(system.grid())?;
        let n = system.carrier_count();
        Ok(ScfState {
            iteration: 0,
            densities: vec![density; n],
            orbitals: vec![psi; n],
            orbital_energies: vec![f64::NAN; n],
            nuclear_shift: 0.0,
            density_residual: f64::INFINITY,
            energy_residual: f64::INFINITY,
            converged: false,
        })
    }

    pub fn moments(&self) -> Vec<f64> {
        self.densities.iter().map(first_moment).collect()
    }
}

/// One Jacobi SCF update. Instruments whose potentials do not depend on any
/// density take the new density unmixed.
pub fn scf_step(state: &ScfState, system: &ScfSystem, config: &ScfConfig) -> Result<ScfState, ScfError> {
    let moments = state.moments();
    let alpha = config.mixing_alpha;
    let solved = (0..system.carrier_count())
        .into_par_iter()
        .map(|slot| {
            let op = system.hamiltonian(slot, &moments)?;
            let pair = ground_state(&op, system.grid()).map_err(|source| ScfError::Eigen {
                ticker: system.carrier_instrument(slot).ticker.clone(),
                source,
            })?;
            let fresh = density_of(&pair.vector);
            let old = &state.densities[slot];
            let density = if system.is_coupled(slot) && alpha < 1.0 {
                let mixed = old.as_function().combine(1.0 - alpha, fresh.as_function(), alpha)?;
                Density::renormalized(mixed)?
            } else {
                fresh
            };
            Ok((pair, density))
        })
        .collect::<Result<Vec<_>, ScfError>>()?;

    let mut densities = Vec::with_capacity(solved.len());
    let mut orbitals = Vec::with_capacity(solved.len());
    let mut energies = Vec::with_capacity(solved.len());
    let mut density_residual: f64 = 0.0;
    let mut energy_residual: f64 = 0.0;
    for (slot, (pair, density)) in solved.into_iter().enumerate() {
        density_residual = density_residual.max(density.l1_distance(&state.densities[slot]));
        let previous = state.orbital_energies[slot];
        let delta = if previous.is_nan() {
            f64::INFINITY
        } else {
            (pair.energy - previous).abs()
        };
        energy_residual = energy_residual.max(delta);
        densities.push(density);
        orbitals.push(pair.vector);
        energies.push(pair.energy);
    }
    Ok(ScfState {
        iteration: state.iteration + 1,
        densities,
        orbitals,
        orbital_energies: energies,
        nuclear_shift: system.nuclear_constant(&moments),
        density_residual,
        energy_residual,
        converged: density_residual < config.tol_density && energy_residual < config.tol_energy,
    })
}

/// Result of a full SCF run. `state.converged == false` flags a run that hit
/// `max_iter`; the report is still assembled from the last state.
#[derive(Debug, Clone)]
pub struct ScfOutcome {
    pub system: ScfSystem,
    pub state: ScfState,
    pub report: SystemReport,
}

pub fn run_scf(universe: &Universe, config: &ScfConfig) -> Result<ScfOutcome, ScfError> {
    let system = ScfSystem::build(universe, config)?;
    run_system(system, config, |_| {})
}

/// Iterates `scf_step` on a prepared system, calling `observe` after every
/// step.
pub fn run_system(
    system: ScfSystem,
    config: &ScfConfig,
    mut observe: impl FnMut(&ScfState),
) -> Result<ScfOutcome, ScfError> {
    config.validate()?;
    let mut state = ScfState::initial(&system)?;
    while state.iteration < config.max_iter {
        state = scf_step(&state, &system, config)?;
        log::debug!(
            "scf iteration {}: density residual {:e}, energy residual {:e}",
            state.iteration,
            state.density_residual,
            state.energy_residual
        );
        observe(&state);
        if state.converged {
            break;
        }
    }
    let report = assemble_energy(&state, &system, config);
    Ok(ScfOutcome {
        system,
        state,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstrumentReport {
    pub ticker: String,
    pub kind: InstrumentKind,
    pub mass: f64,
    /// Ground energy without the index-index constant.
    pub epsilon: f64,
    pub epsilon_with_nuclear_shift: f64,
    pub kinetic: f64,
    pub external: f64,
    pub hartree: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTotals {
    #[serde(rename = "T")]
    pub kinetic: f64,
    pub external: f64,
    pub hartree: f64,
    #[serde(rename = "E_DFT")]
    pub e_dft: f64,
    pub sum_epsilon: f64,
    /// `sum_epsilon - E_DFT`.
    pub hartree_double_counting: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub iterations: usize,
    pub density_residual: f64,
    pub energy_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReport {
    pub instruments: Vec<InstrumentReport>,
    pub totals: EnergyTotals,
    pub nuclear_repulsion: f64,
    /// `Σ_i n_i(r)` over all density carriers.
    pub total_density: GridFunction,
    pub convergence: ConvergenceSummary,
}

/// Energy functional with the correlation term dropped:
/// `E = T + Σ_i ⟨ψ_i|v + Ṽ|ψ_i⟩ + Σ_{z→i} ∬ n_i n_z δ`.
pub fn assemble_energy(state: &ScfState, system: &ScfSystem, _config: &ScfConfig) -> SystemReport {
    let moments = state.moments();
    let nuclear = system.nuclear_constant(&moments);
    let grid = *system.grid();
    let mut total = vec![0.0; grid.n_points()];
    let mut instruments = Vec::with_capacity(system.carrier_count());
    let mut totals = EnergyTotals {
        kinetic: 0.0,
        external: 0.0,
        hartree: 0.0,
        e_dft: 0.0,
        sum_epsilon: 0.0,
        hartree_double_counting: 0.0,
    };
    for slot in 0..system.carrier_count() {
        let carrier = &system.carriers[slot];
        let inst = system.carrier_instrument(slot);
        let density = &state.densities[slot];
        for (t, n) in total.iter_mut().zip(density.values()) {
            *t += n;
        }
        let kinetic = carrier.kinetic.expectation(&state.orbitals[slot]);
        let v = system.affine(&carrier.external, &moments);
        let shift = if carrier.feels_nuclear { nuclear } else { 0.0 };
        let external = potential_expectation(density, &v) + shift;
        let hartree: f64 = carrier
            .hartree
            .iter()
            .map(|t| system.links[t.link].interaction(t.position.value(&moments), moments[slot]))
            .fold(0.0, |acc, x| acc + x);
        let eps = state.orbital_energies[slot];
        let eps_shift = if carrier.feels_nuclear { state.nuclear_shift } else { 0.0 };
        totals.kinetic += kinetic;
        totals.external += external;
        totals.hartree += hartree;
        totals.sum_epsilon += eps;
        instruments.push(InstrumentReport {
            ticker: inst.ticker.clone(),
            kind: inst.kind,
            mass: inst.mass.value(),
            epsilon: eps - eps_shift,
            epsilon_with_nuclear_shift: eps,
            kinetic,
            external,
            hartree,
            mean_return: moments[slot],
        });
    }
    totals.e_dft = totals.kinetic + totals.external + totals.hartree;
    totals.hartree_double_counting = totals.sum_epsilon - totals.e_dft;
    SystemReport {
        instruments,
        totals,
        nuclear_repulsion: nuclear,
        total_density: GridFunction::new(grid, total).expect("grid-sized buffer"),
        convergence: ConvergenceSummary {
            iterations: state.iteration,
            density_residual: state.density_residual,
            energy_residual: state.energy_residual,
            converged: state.converged,
        },
    }
}

/// Mass used by the property checks: the sigmoid midpoint.
pub const CHECK_MASS: f64 = 0.0005;

/// Ground energy `ħ²π²/(2 m L²)` of the continuum infinite well.
pub fn well_ground_energy(hbar: f64, mass: f64, length: f64) -> f64 {
    hbar * hbar * std::f64::consts::PI.powi(2) / (2.0 * mass * length * length)
}

/// Tallies of the variational property suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HkSummary {
    pub trials: usize,
    /// Trials where `E_1 < ⟨ψ_2|H_1|ψ_2⟩` or its mirror failed.
    pub inequality_violations: usize,
    /// Smallest `(⟨ψ_2|H_1|ψ_2⟩ - E_1) / E_scale` seen.
    pub min_relative_margin: f64,
    pub shift_failures: usize,
    pub max_density_deviation: f64,
    pub max_shift_error: f64,
}

impl HkSummary {
    pub fn passed(&self) -> bool {
        self.inequality_violations == 0 && self.shift_failures == 0 && self.trials > 0
    }
}

/// Ground energies and cross expectations for a pair of potentials sharing
/// one kinetic term: `(E_1, E_2, ⟨ψ_2|H_1|ψ_2⟩, ⟨ψ_1|H_2|ψ_1⟩, ψ_1, ψ_2)`.
pub fn variational_pair(
    grid: &Grid,
    kinetic: &TridiagonalOperator,
    v1: &GridFunction,
    v2: &GridFunction,
) -> Result<(f64, f64, f64, f64, Wavefunction, Wavefunction), ScfError> {
    let h1 = kinetic.with_potential(v1)?;
    let h2 = kinetic.with_potential(v2)?;
    let solve = |op: &TridiagonalOperator| {
        ground_state(op, grid).map_err(|source| ScfError::Eigen {
            ticker: "<property check>".into(),
            source,
        })
    };
    let p1 = solve(&h1)?;
    let p2 = solve(&h2)?;
    let cross12 = h1.expectation(&p2.vector);
    let cross21 = h2.expectation(&p1.vector);
    Ok((p1.energy, p2.energy, cross12, cross21, p1.vector, p2.vector))
}

/// Tolerance on densities of constant-shifted potential pairs.
pub const SHIFT_DENSITY_TOLERANCE: f64 = 1e-10;
/// Relative tolerance on `E_2 - E_1 = c` for constant-shifted pairs.
pub const SHIFT_ENERGY_TOLERANCE: f64 = 1e-9;

/// Randomized check that distinct affine potentials obey the strict
/// variational inequalities, and that constant shifts leave densities
/// unchanged while shifting energies by the constant.
pub fn hk_property_check(grid: &Grid, config: &ScfConfig, trials: usize, seed: u64) -> Result<HkSummary, ScfError> {
    let mass = Mass::new(CHECK_MASS)?;
    let kinetic = kinetic_matrix(grid, mass, config.hbar);
    let e_scale = well_ground_energy(config.hbar, CHECK_MASS, grid.length());
    // Slopes up to 10 E / L tilt the well enough for the ground states to
    // differ visibly.
    let max_slope = 10.0 * e_scale / grid.length();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = HkSummary {
        trials,
        inequality_violations: 0,
        min_relative_margin: f64::INFINITY,
        shift_failures: 0,
        max_density_deviation: 0.0,
        max_shift_error: 0.0,
    };
    for _ in 0..trials {
        let s1 = rng.gen_range(-max_slope..max_slope);
        let mut s2 = rng.gen_range(-max_slope..max_slope);
        while (s1 - s2).abs() < 1e-3 * max_slope {
            s2 = rng.gen_range(-max_slope..max_slope);
        }
        let c1 = rng.gen_range(-e_scale..e_scale);
        let c2 = rng.gen_range(-e_scale..e_scale);
        let v1 = GridFunction::from_fn(*grid, |r| c1 + s1 * r);
        let v2 = GridFunction::from_fn(*grid, |r| c2 + s2 * r);
        let (e1, e2, cross12, cross21, _, _) = variational_pair(grid, &kinetic, &v1, &v2)?;
        let margin = (cross12 - e1).min(cross21 - e2);
        summary.min_relative_margin = summary.min_relative_margin.min(margin / e_scale);
        if !(e1 < cross12 && e2 < cross21) {
            summary.inequality_violations += 1;
        }

        let shift = rng.gen_range(-e_scale..e_scale);
        let v3 = v1.map(|x| x + shift);
        let (e1, e3, _, _, psi1, psi3) = variational_pair(grid, &kinetic, &v1, &v3)?;
        let n1 = density_of(&psi1);
        let n3 = density_of(&psi3);
        let deviation = n1
            .values()
            .iter()
            .zip(n3.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let shift_error = ((e3 - e1) - shift).abs() / e1.abs().max(e3.abs()).max(1.0);
        summary.max_density_deviation = summary.max_density_deviation.max(deviation);
        summary.max_shift_error = summary.max_shift_error.max(shift_error);
        if deviation > SHIFT_DENSITY_TOLERANCE || shift_error > SHIFT_ENERGY_TOLERANCE {
            summary.shift_failures += 1;
        }
    }
    Ok(summary)
}
