//! The `stockdft` command set: ingest, links, solve, check, synth.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 flagged non-convergence, 4 property-check failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::eigen::{dense_symmetric_eigenvalues, ground_state, lowest_k};
use crate::grid::{Grid, GridFunction};
use crate::marketdata::{
    align_universe, compute_returns, parse_price_csv, ClampPolicy, DataError, InstrumentKind, Universe,
};
use crate::operator::kinetic_matrix;
use crate::scf::{
    hk_property_check, run_scf, well_ground_energy, ConvergenceSummary, EnergyTotals, HkSummary, ScfConfig,
    ScfError, SystemReport, CHECK_MASS,
};
use crate::stats::{build_links, Mass};
use crate::synthetic::SyntheticMarket;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

pub const TOOL_VERSION: &str = concat!("stockdft ", env!("CARGO_PKG_VERSION"));

/// Relative tolerance of the analytic well energy.
pub const ANALYTIC_ENERGY_TOLERANCE: f64 = 1e-3;
/// Relative tolerance of the 1:4:9 level ratios.
pub const ANALYTIC_RATIO_TOLERANCE: f64 = 5e-3;
/// Relative agreement required with the dense eigensolver.
pub const DENSE_ORACLE_TOLERANCE: f64 = 1e-10;
pub const DENSE_ORACLE_POINTS: usize = 50;
pub const DENSE_ORACLE_INSTANCES: usize = 20;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ScfError> for CliError {
    fn from(e: ScfError) -> Self {
        match e {
            ScfError::Config(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<ScfConfig, CliError> {
    match path {
        None => Ok(ScfConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            ScfConfig::from_toml_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Reads a universe artifact, re-checking its invariants and that the stored
/// returns are the ones its prices imply.
pub fn load_universe(path: &Path) -> Result<Universe, CliError> {
    let bytes = read(path)?;
    let universe: Universe =
        serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    universe.validate()?;
    for inst in &universe.instruments {
        if compute_returns(&inst.prices, ClampPolicy::Clamp)? != inst.returns {
            return Err(CliError::data(format!(
                "{}: returns of {} do not match its prices",
                path.display(),
                inst.ticker()
            )));
        }
    }
    Ok(universe)
}

/// Parses and aligns the CSVs, writes the universe JSON, and returns the
/// summary line.
pub fn cmd_ingest(prices: &Path, caps: &Path, out: &Path, clamp: ClampPolicy) -> Result<String, CliError> {
    let series = parse_price_csv(&read(prices)?, &read(caps)?)?;
    let universe = align_universe(&series, clamp)?;
    let json = serde_json::to_vec_pretty(&universe).expect("universe serializes");
    write(out, &json)?;
    let first = universe.common_dates.first().expect("non-empty");
    let last = universe.common_dates.last().expect("non-empty");
    Ok(format!(
        "{} instruments ({} stocks, {} indexes), {} common dates from {first} to {last}",
        universe.len(),
        universe.count(InstrumentKind::Stock),
        universe.count(InstrumentKind::Index),
        universe.common_dates.len(),
    ))
}

/// Writes the link table and returns the number of links.
pub fn cmd_links(universe: &Path, config: Option<&Path>, out: &Path) -> Result<usize, CliError> {
    let config = load_config(config)?;
    let universe = load_universe(universe)?;
    let links = build_links(&universe, config.link_policy, config.tol_rho).map_err(|e| CliError::data(e.to_string()))?;
    let mut text = String::from("source,target,rho,a,k,active\n");
    for l in &links {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            l.source, l.target, l.rho, l.intercept_a, l.slope_k, l.active
        );
    }
    write(out, text.as_bytes())?;
    Ok(links.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Run provenance written next to the report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub timestamp: String,
    pub config: ScfConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub convergence: ConvergenceSummary,
}

/// The manifest as embedded in `report.json`; it omits the wall-clock
/// timestamp and output digests so the report stays reproducible.
#[derive(Debug, Clone, Serialize)]
struct ManifestReference {
    file: &'static str,
    tool_version: &'static str,
    inputs: Vec<FileDigest>,
}

#[derive(Debug, Serialize)]
struct InstrumentEntry {
    kind: InstrumentKind,
    mass: f64,
    epsilon: f64,
    epsilon_with_nuclear_shift: f64,
    kinetic: f64,
    external: f64,
    hartree: f64,
    mean_return: f64,
}

#[derive(Debug, Serialize)]
struct TotalsEntry {
    #[serde(flatten)]
    energies: EnergyTotals,
    nuclear_repulsion: f64,
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    manifest: ManifestReference,
    config: &'a ScfConfig,
    instruments: BTreeMap<&'a str, InstrumentEntry>,
    totals: TotalsEntry,
    convergence: ConvergenceSummary,
}

/// Serialized `report.json`. Non-finite values (an energy residual before
/// the second iteration) are written as `null`.
pub fn report_json(report: &SystemReport, config: &ScfConfig, inputs: Vec<FileDigest>) -> String {
    let file = ReportFile {
        manifest: ManifestReference {
            file: MANIFEST_FILE,
            tool_version: TOOL_VERSION,
            inputs,
        },
        config,
        instruments: report
            .instruments
            .iter()
            .map(|i| {
                (
                    i.ticker.as_str(),
                    InstrumentEntry {
                        kind: i.kind,
                        mass: i.mass,
                        epsilon: i.epsilon,
                        epsilon_with_nuclear_shift: i.epsilon_with_nuclear_shift,
                        kinetic: i.kinetic,
                        external: i.external,
                        hartree: i.hartree,
                        mean_return: i.mean_return,
                    },
                )
            })
            .collect(),
        totals: TotalsEntry {
            energies: report.totals,
            nuclear_repulsion: report.nuclear_repulsion,
        },
        convergence: report.convergence,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("report serializes");
    s.push('\n');
    s
}

/// `r,n` rows with shortest round-trip formatting.
pub fn density_csv(grid: &Grid, values: &[f64]) -> String {
    let mut s = String::from("r,n\n");
    for (r, n) in grid.nodes().zip(values) {
        let _ = writeln!(s, "{r},{n}");
    }
    s
}

/// Keeps tickers usable as file names.
pub fn file_stem(ticker: &str) -> String {
    ticker
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOTAL_DENSITY_FILE: &str = "total_density.csv";
pub const DENSITY_DIR: &str = "densities";

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub report: SystemReport,
    pub report_path: PathBuf,
    pub manifest: RunManifest,
}

impl SolveSummary {
    pub fn converged(&self) -> bool {
        self.report.convergence.converged
    }
}

fn timestamp() -> String {
    let now = match std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok()) {
        Some(secs) => chrono::DateTime::from_timestamp(secs, 0).unwrap_or_else(chrono::Utc::now),
        None => chrono::Utc::now(),
    };
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs the SCF loop and writes the report, density CSVs, and manifest. A
/// flagged non-convergence still writes every file; check
/// [`SolveSummary::converged`].
pub fn cmd_solve(universe_path: &Path, config_path: Option<&Path>, out_dir: &Path) -> Result<SolveSummary, CliError> {
    let config = load_config(config_path)?;
    let universe = load_universe(universe_path)?;
    let universe_bytes = read(universe_path)?;

    let name_of = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut inputs = vec![FileDigest {
        file: name_of(universe_path),
        sha256: sha256_hex(&universe_bytes),
    }];
    if let Some(p) = config_path {
        inputs.push(FileDigest {
            file: name_of(p),
            sha256: sha256_hex(&read(p)?),
        });
    }

    let outcome = run_scf(&universe, &config)?;
    let grid = *outcome.system.grid();
    let report = outcome.report;

    let mut outputs = Vec::new();
    let mut emit = |rel: String, bytes: &[u8]| -> Result<(), CliError> {
        write(&out_dir.join(&rel), bytes)?;
        outputs.push(FileDigest {
            file: rel,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    };
    let json = report_json(&report, &config, inputs.clone());
    emit(REPORT_FILE.into(), json.as_bytes())?;
    for (inst, density) in report.instruments.iter().zip(&outcome.state.densities) {
        let rel = format!("{DENSITY_DIR}/{}.csv", file_stem(&inst.ticker));
        emit(rel, density_csv(&grid, density.values()).as_bytes())?;
    }
    emit(
        TOTAL_DENSITY_FILE.into(),
        density_csv(&grid, report.total_density.values()).as_bytes(),
    )?;

    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        timestamp: timestamp(),
        config: config.clone(),
        inputs,
        outputs,
        convergence: report.convergence,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;

    if !report.convergence.converged {
        log::warn!(
            "not converged after {} iterations (density residual {:e})",
            report.convergence.iterations,
            report.convergence.density_residual
        );
    }
    Ok(SolveSummary {
        report,
        report_path: out_dir.join(REPORT_FILE),
        manifest,
    })
}

/// Zero-potential levels against the continuum well at the config's grid
/// size.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticCheck {
    pub n_points: usize,
    pub energy_relative_error: f64,
    pub ratio_2: f64,
    pub ratio_3: f64,
    pub passed: bool,
}

pub fn analytic_check(config: &ScfConfig) -> Result<AnalyticCheck, CliError> {
    let grid = config.grid()?;
    let mass = Mass::new(CHECK_MASS).expect("valid mass");
    let op = kinetic_matrix(&grid, mass, config.hbar);
    let k = 3.min(grid.interior_len());
    let levels = lowest_k(&op, &grid, k).map_err(|e| CliError::data(e.to_string()))?;
    let exact = well_ground_energy(config.hbar, CHECK_MASS, grid.length());
    let energy_relative_error = ((levels[0].energy - exact) / exact).abs();
    let ratio = |i: usize| levels.get(i).map_or(f64::NAN, |p| p.energy / levels[0].energy);
    let (ratio_2, ratio_3) = (ratio(1), ratio(2));
    let passed = energy_relative_error < ANALYTIC_ENERGY_TOLERANCE
        && ((ratio_2 - 4.0) / 4.0).abs() < ANALYTIC_RATIO_TOLERANCE
        && ((ratio_3 - 9.0) / 9.0).abs() < ANALYTIC_RATIO_TOLERANCE;
    Ok(AnalyticCheck {
        n_points: grid.n_points(),
        energy_relative_error,
        ratio_2,
        ratio_3,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DenseOracleCheck {
    pub instances: usize,
    pub failures: usize,
    pub max_relative_error: f64,
}

/// Ground energies on random affine potentials against cyclic Jacobi on the
/// dense matrix.
pub fn dense_oracle_check(config: &ScfConfig, seed: u64) -> Result<DenseOracleCheck, CliError> {
    let grid = Grid::new(DENSE_ORACLE_POINTS).expect("valid grid");
    let mass = Mass::new(CHECK_MASS).expect("valid mass");
    let kinetic = kinetic_matrix(&grid, mass, config.hbar);
    let scale = well_ground_energy(config.hbar, CHECK_MASS, grid.length());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DenseOracleCheck {
        instances: DENSE_ORACLE_INSTANCES,
        failures: 0,
        max_relative_error: 0.0,
    };
    for _ in 0..DENSE_ORACLE_INSTANCES {
        let slope = rng.gen_range(-10.0..10.0) * scale / grid.length();
        let offset = rng.gen_range(-1.0..1.0) * scale;
        let v = GridFunction::from_fn(grid, |r| offset + slope * r);
        let op = kinetic.with_potential(&v).map_err(|e| CliError::data(e.to_string()))?;
        let tri = ground_state(&op, &grid).map_err(|e| CliError::data(e.to_string()))?.energy;
        let dense = dense_symmetric_eigenvalues(&op.to_dense())[0];
        let err = ((tri - dense) / dense).abs();
        out.max_relative_error = out.max_relative_error.max(err);
        if !(err <= DENSE_ORACLE_TOLERANCE) {
            out.failures += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub analytic: AnalyticCheck,
    pub dense_oracle: DenseOracleCheck,
    pub variational: HkSummary,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.analytic.passed && self.dense_oracle.failures == 0 && self.variational.passed()
    }

    pub fn lines(&self) -> Vec<String> {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let a = &self.analytic;
        let d = &self.dense_oracle;
        let h = &self.variational;
        vec![
            format!(
                "{} analytic well (n_points={}): energy error {:.3e}, ratios {:.5} {:.5}",
                verdict(a.passed),
                a.n_points,
                a.energy_relative_error,
                a.ratio_2,
                a.ratio_3
            ),
            format!(
                "{} dense oracle: {}/{} instances agree, max relative error {:.3e}",
                verdict(d.failures == 0),
                d.instances - d.failures,
                d.instances,
                d.max_relative_error
            ),
            format!(
                "{} variational inequality: {} violations in {} trials, min margin {:.3e}",
                verdict(h.inequality_violations == 0),
                h.inequality_violations,
                h.trials,
                h.min_relative_margin
            ),
            format!(
                "{} constant shift: {} failures, max density deviation {:.3e}, max energy error {:.3e}",
                verdict(h.shift_failures == 0),
                h.shift_failures,
                h.max_density_deviation,
                h.max_shift_error
            ),
        ]
    }
}

pub fn cmd_check(config_path: Option<&Path>, trials: usize, seed: u64) -> Result<CheckSummary, CliError> {
    if trials == 0 {
        return Err(CliError::usage("trials must be at least 1"));
    }
    let config = load_config(config_path)?;
    let grid = config.grid()?;
    Ok(CheckSummary {
        analytic: analytic_check(&config)?,
        dense_oracle: dense_oracle_check(&config, seed)?,
        variational: hk_property_check(&grid, &config, trials, seed)?,
    })
}

/// Writes a synthetic `prices.csv` / `caps.csv` pair into `out_dir`.
pub fn cmd_synth(market: &SyntheticMarket, out_dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let (prices, caps) = market.to_csv();
    let p = out_dir.join("prices.csv");
    let c = out_dir.join("caps.csv");
    write(&p, prices.as_bytes())?;
    write(&c, caps.as_bytes())?;
    Ok((p, c))
}

#[derive(Debug, Parser)]
#[command(name = "stockdft", version, about = "Ground states of a market modeled as a molecule")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and align price/cap CSVs into a universe JSON file.
    Ingest {
        prices: PathBuf,
        caps: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail on returns outside [-0.10, 0.10] instead of clamping them.
        #[arg(long)]
        reject_out_of_band: bool,
    },
    /// Write the regression link table as CSV.
    Links {
        universe: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the SCF loop and write report, densities, and manifest.
    Solve {
        universe: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the eigensolver oracles and the variational property suite.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Generate a synthetic one-factor market as CSV.
    Synth {
        #[arg(long, default_value_t = 300)]
        stocks: usize,
        #[arg(long, default_value_t = 121)]
        days: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command, printing to stdout, and returns the exit code.
pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Ingest {
            prices,
            caps,
            out,
            reject_out_of_band,
        } => {
            let clamp = if reject_out_of_band {
                ClampPolicy::Reject
            } else {
                ClampPolicy::Clamp
            };
            println!("{}", cmd_ingest(&prices, &caps, &out, clamp)?);
            Ok(EXIT_OK)
        }
        Command::Links { universe, config, out } => {
            let n = cmd_links(&universe, config.as_deref(), &out)?;
            println!("{n} links written to {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Solve { universe, config, out } => {
            let s = cmd_solve(&universe, config.as_deref(), &out)?;
            let c = &s.report.convergence;
            println!(
                "{} after {} iterations (density residual {:.3e}); E_DFT = {}",
                if c.converged { "converged" } else { "NOT converged" },
                c.iterations,
                c.density_residual,
                s.report.totals.e_dft
            );
            println!("report written to {}", s.report_path.display());
            Ok(if s.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Check { config, trials, seed } => {
            let summary = cmd_check(config.as_deref(), trials, seed)?;
            for line in summary.lines() {
                println!("{line}");
            }
            Ok(if summary.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Synth { stocks, days, seed, out } => {
            if stocks == 0 || days < 2 {
                return Err(CliError::usage("need at least one stock and two days"));
            }
            let market = SyntheticMarket {
                n_stocks: stocks,
                n_days: days,
                seed,
                ..SyntheticMarket::default()
            };
            let (p, c) = cmd_synth(&market, &out)?;
            println!("wrote {} and {}", p.display(), c.display());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs; errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("600519.SH"), "600519.SH");
        assert_eq!(file_stem("A/B C"), "A_B_C");
    }

    #[test]
    fn density_csv_round_trips() {
        let g = Grid::new(5).unwrap();
        let v = [0.0, 0.1 + 0.2, 1.0 / 3.0, 2e-300, 0.0];
        let text = density_csv(&g, &v);
        let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(parsed, v);
        assert!(text.starts_with("r,n\n-0.1,0\n"));
    }

    #[test]
    fn usage_errors_map_to_one() {
        assert_eq!(run(["stockdft", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["stockdft", "check", "--trials", "0"]), EXIT_USAGE);
    }

    #[test]
    fn coarse_grid_fails_analytic_check() {
        let config = ScfConfig {
            n_points: 11,
            ..ScfConfig::default()
        };
        assert!(!analytic_check(&config).unwrap().passed);
        assert!(analytic_check(&ScfConfig::default()).unwrap().passed);
    }
}
