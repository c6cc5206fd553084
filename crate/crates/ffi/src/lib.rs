//! C ABI over the `stockdft` solver.
//!
//! Objects cross the boundary as opaque handles created by `sd_*_new`/`sd_*_from_*`
//! functions and released by the matching `sd_*_free`. Every fallible call
//! returns an [`SdStatus`]; on failure a description is available from
//! [`sd_last_error_message`] on the same thread. Strings returned as
//! `char *` are owned by the caller and released with [`sd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stockdft::cli::{load_universe, report_json, CliError};
use stockdft::{align_universe, mass_from_cap, parse_price_csv, run_scf, ClampPolicy, ScfConfig, ScfError};

/// Result code of every fallible call. In C the variants are named
/// `SD_STATUS_OK`, `SD_STATUS_NULL_POINTER`, and so on.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    DataError = 4,
    ConfigError = 5,
    /// The solve finished without converging; the solution is still returned.
    NotConverged = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Aligned market data.
pub struct SdUniverse(stockdft::Universe);

/// Solver configuration.
pub struct SdConfig(ScfConfig);

/// Result of a solve.
pub struct SdSolution {
    config: ScfConfig,
    report: stockdft::SystemReport,
    densities: Vec<Vec<f64>>,
    nodes: Vec<f64>,
}

/// Energy totals of a solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SdTotals {
    pub kinetic: f64,
    pub external: f64,
    pub hartree: f64,
    pub e_dft: f64,
    pub sum_epsilon: f64,
    pub nuclear_repulsion: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("interior NULs removed"));
}

fn fail(status: SdStatus, message: impl AsRef<str>) -> SdStatus {
    set_error(message.as_ref());
    status
}

/// Runs `f`, turning panics into `SdStatus::Panic`.
fn guard(f: impl FnOnce() -> SdStatus) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(SdStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SdStatus> {
    if p.is_null() {
        return Err(fail(SdStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, name: &str) -> Result<&'a [u8], SdStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SdStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, SdStatus> {
    p.as_ref()
        .ok_or_else(|| fail(SdStatus::NullPointer, format!("{name} is null")))
}

fn scf_status(e: &ScfError) -> SdStatus {
    match e {
        ScfError::Config(_) => SdStatus::ConfigError,
        _ => SdStatus::DataError,
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `prices.csv` / `caps.csv` contents and aligns them.
///
/// # Safety
/// Buffers must be readable for the given lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_universe_from_csv(
    prices: *const u8,
    prices_len: usize,
    caps: *const u8,
    caps_len: usize,
    reject_out_of_band: bool,
    out: *mut *mut SdUniverse,
) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        let prices = tri!(bytes_arg(prices, prices_len, "prices"));
        let caps = tri!(bytes_arg(caps, caps_len, "caps"));
        let clamp = if reject_out_of_band {
            ClampPolicy::Reject
        } else {
            ClampPolicy::Clamp
        };
        let universe = match parse_price_csv(prices, caps).and_then(|s| align_universe(&s, clamp)) {
            Ok(u) => u,
            Err(e) => return fail(SdStatus::DataError, e.to_string()),
        };
        *out = Box::into_raw(Box::new(SdUniverse(universe)));
        SdStatus::Ok
    })
}

/// Loads a universe JSON file written by `stockdft ingest`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_universe_from_json_file(path: *const c_char, out: *mut *mut SdUniverse) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        let path = tri!(str_arg(path, "path"));
        match load_universe(Path::new(path)) {
            Ok(u) => {
                *out = Box::into_raw(Box::new(SdUniverse(u)));
                SdStatus::Ok
            }
            Err(CliError { message, .. }) => {
                let status = if Path::new(path).exists() {
                    SdStatus::DataError
                } else {
                    SdStatus::IoError
                };
                fail(status, message)
            }
        }
    })
}

/// Number of instruments in the universe, 0 for null.
///
/// # Safety
/// `u` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_universe_len(u: *const SdUniverse) -> usize {
    u.as_ref().map_or(0, |u| u.0.len())
}

/// Number of common dates in the universe, 0 for null.
///
/// # Safety
/// `u` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_universe_date_count(u: *const SdUniverse) -> usize {
    u.as_ref().map_or(0, |u| u.0.common_dates.len())
}

/// # Safety
/// `u` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_universe_free(u: *mut SdUniverse) {
    if !u.is_null() {
        drop(Box::from_raw(u));
    }
}

/// A configuration holding the defaults.
#[no_mangle]
pub extern "C" fn sd_config_new() -> *mut SdConfig {
    Box::into_raw(Box::new(SdConfig(ScfConfig::default())))
}

/// Parses a `key = value` configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_config_from_str(text: *const c_char, out: *mut *mut SdConfig) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        let text = tri!(str_arg(text, "text"));
        match ScfConfig::from_toml_str(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(SdConfig(c)));
                SdStatus::Ok
            }
            Err(e) => fail(SdStatus::ConfigError, e.to_string()),
        }
    })
}

fn with_key(config: &ScfConfig, key: &str, value: &str) -> Result<ScfConfig, ScfError> {
    let base: String = config
        .to_toml_string()
        .lines()
        .filter(|l| l.split('=').next().map(str::trim) != Some(key))
        .map(|l| format!("{l}\n"))
        .collect();
    let attempt = |v: &str| ScfConfig::from_toml_str(&format!("{base}{key} = {v}\n"));
    attempt(value).or_else(|first| {
        // Bare words such as `mass_ordered` are accepted as strings.
        let is_word = !value.is_empty() && value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if is_word {
            attempt(&format!("\"{value}\"")).map_err(|_| first)
        } else {
            Err(first)
        }
    })
}

/// Sets one configuration key, e.g. `("hbar", "0.003")` or
/// `("link_policy", "mass_ordered")`. The configuration is unchanged on
/// failure.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sd_config_set(config: *mut SdConfig, key: *const c_char, value: *const c_char) -> SdStatus {
    guard(|| {
        let Some(config) = config.as_mut() else {
            return fail(SdStatus::NullPointer, "config is null");
        };
        let key = tri!(str_arg(key, "key"));
        let value = tri!(str_arg(value, "value"));
        match with_key(&config.0, key.trim(), value.trim()) {
            Ok(c) => {
                config.0 = c;
                SdStatus::Ok
            }
            Err(e) => fail(SdStatus::ConfigError, e.to_string()),
        }
    })
}

/// The configuration as `key = value` text.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_config_to_string(config: *const SdConfig) -> *mut c_char {
    match config.as_ref() {
        Some(c) => into_c_string(c.0.to_toml_string()),
        None => {
            set_error("config is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_config_free(config: *mut SdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the SCF loop. On `SD_STATUS_OK` or `SD_STATUS_NOT_CONVERGED` a solution is written
/// to `out`; on any other status `out` is left untouched.
///
/// # Safety
/// `universe` and `config` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_solve(
    universe: *const SdUniverse,
    config: *const SdConfig,
    out: *mut *mut SdSolution,
) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        let universe = tri!(handle(universe, "universe"));
        let config = tri!(handle(config, "config"));
        let outcome = match run_scf(&universe.0, &config.0) {
            Ok(o) => o,
            Err(e) => return fail(scf_status(&e), e.to_string()),
        };
        let converged = outcome.state.converged;
        let solution = SdSolution {
            config: config.0.clone(),
            nodes: outcome.system.grid().nodes().collect(),
            densities: outcome.state.densities.iter().map(|d| d.values().to_vec()).collect(),
            report: outcome.report,
        };
        *out = Box::into_raw(Box::new(solution));
        if converged {
            SdStatus::Ok
        } else {
            fail(SdStatus::NotConverged, "maximum iterations reached before convergence")
        }
    })
}

/// Whether the solve converged; false for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_converged(s: *const SdSolution) -> bool {
    s.as_ref().is_some_and(|s| s.report.convergence.converged)
}

/// Iterations performed; 0 for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_iterations(s: *const SdSolution) -> usize {
    s.as_ref().map_or(0, |s| s.report.convergence.iterations)
}

/// Number of density-carrying instruments; 0 for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_count(s: *const SdSolution) -> usize {
    s.as_ref().map_or(0, |s| s.report.instruments.len())
}

/// Number of grid nodes of every density; 0 for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_grid_points(s: *const SdSolution) -> usize {
    s.as_ref().map_or(0, |s| s.nodes.len())
}

/// Ticker of instrument `index`, or null when out of range.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_ticker(s: *const SdSolution, index: usize) -> *mut c_char {
    match s.as_ref().and_then(|s| s.report.instruments.get(index)) {
        Some(i) => into_c_string(i.ticker.clone()),
        None => {
            set_error("no such instrument");
            ptr::null_mut()
        }
    }
}

/// Ground energy `ε` of instrument `index` (without the index-index
/// constant) and the same energy with it.
///
/// # Safety
/// `s` must be a live handle; the outputs must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_epsilon(
    s: *const SdSolution,
    index: usize,
    epsilon: *mut f64,
    epsilon_with_nuclear_shift: *mut f64,
) -> SdStatus {
    guard(|| {
        let s = tri!(handle(s, "solution"));
        let Some(i) = s.report.instruments.get(index) else {
            return fail(SdStatus::OutOfRange, format!("instrument {index} out of range"));
        };
        if !epsilon.is_null() {
            *epsilon = i.epsilon;
        }
        if !epsilon_with_nuclear_shift.is_null() {
            *epsilon_with_nuclear_shift = i.epsilon_with_nuclear_shift;
        }
        SdStatus::Ok
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> SdStatus {
    if len < src.len() {
        return fail(
            SdStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    if buf.is_null() {
        return fail(SdStatus::NullPointer, "buffer is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    SdStatus::Ok
}

/// Copies the grid nodes into `buf` (at least `sd_solution_grid_points`).
///
/// # Safety
/// `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_nodes(s: *const SdSolution, buf: *mut f64, len: usize) -> SdStatus {
    guard(|| {
        let s = tri!(handle(s, "solution"));
        copy_out(&s.nodes, buf, len)
    })
}

/// Copies the density of instrument `index` into `buf`.
///
/// # Safety
/// `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_density(s: *const SdSolution, index: usize, buf: *mut f64, len: usize) -> SdStatus {
    guard(|| {
        let s = tri!(handle(s, "solution"));
        match s.densities.get(index) {
            Some(d) => copy_out(d, buf, len),
            None => fail(SdStatus::OutOfRange, format!("instrument {index} out of range")),
        }
    })
}

/// Copies the summed density of all instruments into `buf`.
///
/// # Safety
/// `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_total_density(s: *const SdSolution, buf: *mut f64, len: usize) -> SdStatus {
    guard(|| {
        let s = tri!(handle(s, "solution"));
        copy_out(s.report.total_density.values(), buf, len)
    })
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_totals(s: *const SdSolution, out: *mut SdTotals) -> SdStatus {
    guard(|| {
        let s = tri!(handle(s, "solution"));
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        let t = &s.report.totals;
        *out = SdTotals {
            kinetic: t.kinetic,
            external: t.external,
            hartree: t.hartree,
            e_dft: t.e_dft,
            sum_epsilon: t.sum_epsilon,
            nuclear_repulsion: s.report.nuclear_repulsion,
        };
        SdStatus::Ok
    })
}

/// The report in the `report.json` layout, without input digests.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_report_json(s: *const SdSolution) -> *mut c_char {
    match s.as_ref() {
        Some(s) => into_c_string(report_json(&s.report, &s.config, Vec::new())),
        None => {
            set_error("solution is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_solution_free(s: *mut SdSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Sigmoid mass of a market cap.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_mass_from_cap(cap: f64, cap_scale: f64, out: *mut f64) -> SdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SdStatus::NullPointer, "out is null");
        }
        match mass_from_cap(cap, cap_scale) {
            Ok(m) => {
                *out = m.value();
                SdStatus::Ok
            }
            Err(e) => fail(SdStatus::DataError, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys() {
        let c = ScfConfig::default();
        let d = with_key(&c, "hbar", "0.25").unwrap();
        assert_eq!(d.hbar, 0.25);
        let d = with_key(&d, "link_policy", "mass_ordered").unwrap();
        assert_eq!(d.link_policy, stockdft::LinkPolicy::MassOrdered);
        assert_eq!(d.hbar, 0.25);
        assert!(with_key(&c, "hbr", "1").is_err());
        assert!(with_key(&c, "mixing_alpha", "2").is_err());
        assert!(with_key(&c, "max_iter", "ten").is_err());
    }
}
