//! Ground-state solver for a market modeled as a molecule: indexes play the
//! role of nuclei, constituent stocks the role of electrons, and pairwise
//! regression residuals act as interaction potentials on the bounded daily
//! return axis `[-0.10, 0.10]`.
//!
//! The pipeline is
//!
//! 1. [`marketdata`]: parse price/cap CSVs, align dates, compute bounded returns;
//! 2. [`stats`]: Pearson correlation, regression links, sigmoid masses;
//! 3. [`grid`] and [`operator`]: discretize the return axis and assemble
//!    per-instrument tridiagonal Hamiltonians;
//! 4. [`eigen`]: lowest eigenpairs of those Hamiltonians;
//! 5. [`scf`]: the self-consistent-field loop and energy assembly;
//! 6. [`cli`]: the `stockdft` command set and its file formats.

pub mod cli;
pub mod eigen;
pub mod grid;
pub mod marketdata;
pub mod operator;
pub mod scf;
pub mod stats;
pub mod synthetic;

pub use eigen::{ground_state, lowest_k, Eigenpair, EigenError};
pub use grid::{Density, Grid, GridError, GridFunction, Wavefunction};
pub use marketdata::{
    align_universe, compute_returns, parse_price_csv, ClampPolicy, DataError, Instrument,
    InstrumentKind, PriceSeries, ReturnSeries, Universe,
};
pub use operator::{IndexMode, OperatorError, PotentialBundle, TridiagonalOperator};
pub use scf::{
    assemble_energy, hk_property_check, run_scf, ClampMode, ScfConfig, ScfError, ScfOutcome,
    ScfState, ScfSystem, SystemReport,
};
pub use stats::{build_links, mass_from_cap, LinkPolicy, Mass, RegressionLink, StatsError};
