//! Price and capitalization ingestion, date alignment, bounded returns.
//!
//! Two CSV inputs are accepted:
//!
//! * `prices.csv` with header `date,ticker,close` (ISO-8601 dates),
//! * `caps.csv` with header `ticker,kind,market_cap,index_membership`.
//!
//! Returns are simple daily returns `close[t+1] / close[t] - 1`, restricted to
//! the daily price-limit band `[-0.10, 0.10]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower edge of the admissible return band.
pub const RETURN_MIN: f64 = -0.10;
/// Upper edge of the admissible return band.
pub const RETURN_MAX: f64 = 0.10;

/// Instruments covering less than this fraction of all observed dates are
/// dropped before the inner join.
pub const MIN_DATE_COVERAGE: f64 = 0.80;

const PRICES_HEADER: [&str; 3] = ["date", "ticker", "close"];
const CAPS_HEADER: [&str; 4] = ["ticker", "kind", "market_cap", "index_membership"];
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{file}: line {line}: malformed row: {message}")]
    MalformedRow {
        file: &'static str,
        line: u64,
        message: String,
    },
    #[error("{file}: unexpected header {found:?}, expected {expected:?}")]
    BadHeader {
        file: &'static str,
        found: String,
        expected: String,
    },
    #[error("{file}: no data rows")]
    Empty { file: &'static str },
    #[error("prices.csv: line {line}: duplicate observation for ({ticker}, {date})")]
    DuplicateObservation {
        line: u64,
        ticker: String,
        date: NaiveDate,
    },
    #[error("prices.csv: line {line}: non-positive price {value} for {ticker}")]
    NonPositivePrice {
        line: u64,
        ticker: String,
        value: f64,
    },
    #[error("caps.csv: line {line}: non-positive market cap {value} for {ticker}")]
    NonPositiveCap {
        line: u64,
        ticker: String,
        value: f64,
    },
    #[error("caps.csv: line {line}: unknown kind {kind:?} (expected stock or index)")]
    UnknownKind { line: u64, kind: String },
    #[error("caps.csv: line {line}: duplicate ticker {ticker}")]
    DuplicateCap { line: u64, ticker: String },
    #[error("no caps entry for price ticker {0}")]
    MissingCap(String),
    #[error("invalid series {ticker}: {message}")]
    InvalidSeries { ticker: String, message: String },
    #[error("return {value} of {ticker} at step {step} lies outside [-0.10, 0.10]")]
    ReturnOutOfBounds {
        ticker: String,
        step: usize,
        value: f64,
    },
    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),
    #[error("date intersection of the retained instruments is empty")]
    EmptyIntersection,
    #[error("no index instrument present")]
    NoIndex,
    #[error("no stock instrument present")]
    NoStock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentKind {
    Stock,
    Index,
}

impl InstrumentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentKind::Stock => "stock",
            InstrumentKind::Index => "index",
        }
    }
}

impl fmt::Display for InstrumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Daily closes of one instrument plus its capitalization snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub kind: InstrumentKind,
    pub market_cap: f64,
    pub index_membership: Option<String>,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        ticker: impl Into<String>,
        kind: InstrumentKind,
        market_cap: f64,
        index_membership: Option<String>,
        dates: Vec<NaiveDate>,
        closes: Vec<f64>,
    ) -> Result<Self, DataError> {
        let series = PriceSeries {
            ticker: ticker.into(),
            kind,
            market_cap,
            index_membership,
            dates,
            closes,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |message: String| DataError::InvalidSeries {
            ticker: self.ticker.clone(),
            message,
        };
        if self.dates.len() != self.closes.len() {
            return Err(invalid(format!(
                "{} dates but {} closes",
                self.dates.len(),
                self.closes.len()
            )));
        }
        if self.dates.len() < 2 {
            return Err(invalid("fewer than 2 observations".into()));
        }
        if !self.dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("dates are not strictly increasing".into()));
        }
        if let Some(c) = self.closes.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid(format!("non-positive price {c}")));
        }
        if !(self.market_cap.is_finite() && self.market_cap > 0.0) {
            return Err(invalid(format!("non-positive market cap {}", self.market_cap)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// Raw returns outside the band are clipped to the nearest edge.
    #[default]
    Clamp,
    /// Raw returns outside the band are an error.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub ticker: String,
    pub returns: Vec<f64>,
    pub sample_mean: f64,
    pub sample_std: f64,
}

impl ReturnSeries {
    /// Wraps raw values, computing population moments.
    pub fn from_returns(ticker: impl Into<String>, returns: Vec<f64>) -> Self {
        let (sample_mean, sample_std) = population_moments(&returns);
        ReturnSeries {
            ticker: ticker.into(),
            returns,
            sample_mean,
            sample_std,
        }
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.returns.last().copied()
    }
}

/// Mean and divide-by-n standard deviation. A constant sample yields exactly
/// `(value, 0.0)`.
pub fn population_moments(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One aligned instrument: its prices on the common dates and its returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub prices: PriceSeries,
    pub returns: ReturnSeries,
}

impl Instrument {
    pub fn ticker(&self) -> &str {
        &self.prices.ticker
    }

    pub fn kind(&self) -> InstrumentKind {
        self.prices.kind
    }

    pub fn market_cap(&self) -> f64 {
        self.prices.market_cap
    }
}

/// Instruments aligned on a common date set, sorted by ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub common_dates: Vec<NaiveDate>,
    pub instruments: Vec<Instrument>,
}

impl Universe {
    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn count(&self, kind: InstrumentKind) -> usize {
        self.instruments.iter().filter(|i| i.kind() == kind).count()
    }

    pub fn get(&self, ticker: &str) -> Option<&Instrument> {
        self.instruments.iter().find(|i| i.ticker() == ticker)
    }

    pub fn price_series(&self) -> Vec<PriceSeries> {
        self.instruments.iter().map(|i| i.prices.clone()).collect()
    }

    /// Checks the invariants a deserialized universe must satisfy.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        for inst in &self.instruments {
            if !seen.insert(inst.ticker()) {
                return Err(DataError::DuplicateTicker(inst.ticker().to_string()));
            }
            inst.prices.validate()?;
            if inst.prices.dates != self.common_dates {
                return Err(DataError::InvalidSeries {
                    ticker: inst.ticker().to_string(),
                    message: "dates differ from the common date set".into(),
                });
            }
            if inst.returns.len() + 1 != self.common_dates.len() {
                return Err(DataError::InvalidSeries {
                    ticker: inst.ticker().to_string(),
                    message: "return series length does not match the common dates".into(),
                });
            }
            if let Some((step, value)) = inst
                .returns
                .returns
                .iter()
                .enumerate()
                .find(|(_, r)| !(RETURN_MIN..=RETURN_MAX).contains(*r))
            {
                return Err(DataError::ReturnOutOfBounds {
                    ticker: inst.ticker().to_string(),
                    step,
                    value: *value,
                });
            }
        }
        if self.count(InstrumentKind::Index) == 0 {
            return Err(DataError::NoIndex);
        }
        if self.count(InstrumentKind::Stock) == 0 {
            return Err(DataError::NoStock);
        }
        Ok(())
    }
}

struct CapEntry {
    kind: InstrumentKind,
    market_cap: f64,
    index_membership: Option<String>,
}

fn reader(raw: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(raw)
}

fn check_header(
    rdr: &mut csv::Reader<&[u8]>,
    file: &'static str,
    expected: &[&str],
) -> Result<(), DataError> {
    let headers = rdr.headers().map_err(|e| csv_error(file, &e))?.clone();
    if headers.iter().eq(expected.iter().copied()) {
        return Ok(());
    }
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(DataError::Empty { file });
    }
    Err(DataError::BadHeader {
        file,
        found: headers.iter().collect::<Vec<_>>().join(","),
        expected: expected.join(","),
    })
}

fn csv_error(file: &'static str, err: &csv::Error) -> DataError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    DataError::MalformedRow {
        file,
        line,
        message: err.to_string(),
    }
}

fn parse_f64(file: &'static str, line: u64, field: &str, what: &str) -> Result<f64, DataError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::MalformedRow {
            file,
            line,
            message: format!("cannot parse {what} {field:?}"),
        })
}

fn parse_caps(raw: &[u8]) -> Result<HashMap<String, CapEntry>, DataError> {
    const FILE: &str = "caps.csv";
    let mut rdr = reader(raw);
    check_header(&mut rdr, FILE, &CAPS_HEADER)?;
    let mut caps = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(FILE, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ticker = record[0].to_string();
        if ticker.is_empty() {
            return Err(DataError::MalformedRow {
                file: FILE,
                line,
                message: "empty ticker".into(),
            });
        }
        let kind = match record[1].to_ascii_lowercase().as_str() {
            "stock" => InstrumentKind::Stock,
            "index" => InstrumentKind::Index,
            other => {
                return Err(DataError::UnknownKind {
                    line,
                    kind: other.to_string(),
                })
            }
        };
        let market_cap = parse_f64(FILE, line, &record[2], "market_cap")?;
        if market_cap <= 0.0 {
            return Err(DataError::NonPositiveCap {
                line,
                ticker,
                value: market_cap,
            });
        }
        let index_membership = match (&record[3], kind) {
            ("", _) | (_, InstrumentKind::Index) => None,
            (parent, InstrumentKind::Stock) => Some(parent.to_string()),
        };
        let entry = CapEntry {
            kind,
            market_cap,
            index_membership,
        };
        if caps.insert(ticker.clone(), entry).is_some() {
            return Err(DataError::DuplicateCap { line, ticker });
        }
    }
    if caps.is_empty() {
        return Err(DataError::Empty { file: FILE });
    }
    Ok(caps)
}

/// Parses the two input files into one [`PriceSeries`] per ticker, ordered
/// by ticker with dates ascending.
pub fn parse_price_csv(prices: &[u8], caps: &[u8]) -> Result<Vec<PriceSeries>, DataError> {
    const FILE: &str = "prices.csv";
    let caps = parse_caps(caps)?;
    let mut rdr = reader(prices);
    check_header(&mut rdr, FILE, &PRICES_HEADER)?;

    let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(FILE, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| {
            DataError::MalformedRow {
                file: FILE,
                line,
                message: format!("bad date {:?}: {e}", &record[0]),
            }
        })?;
        let ticker = record[1].to_string();
        if ticker.is_empty() {
            return Err(DataError::MalformedRow {
                file: FILE,
                line,
                message: "empty ticker".into(),
            });
        }
        let close = parse_f64(FILE, line, &record[2], "close")?;
        if close <= 0.0 {
            return Err(DataError::NonPositivePrice {
                line,
                ticker,
                value: close,
            });
        }
        if by_ticker
            .entry(ticker.clone())
            .or_default()
            .insert(date, close)
            .is_some()
        {
            return Err(DataError::DuplicateObservation { line, ticker, date });
        }
    }
    if by_ticker.is_empty() {
        return Err(DataError::Empty { file: FILE });
    }

    by_ticker
        .into_iter()
        .map(|(ticker, obs)| {
            let cap = caps
                .get(&ticker)
                .ok_or_else(|| DataError::MissingCap(ticker.clone()))?;
            let (dates, closes) = obs.into_iter().unzip();
            PriceSeries::new(
                ticker,
                cap.kind,
                cap.market_cap,
                cap.index_membership.clone(),
                dates,
                closes,
            )
        })
        .collect()
}

/// Serializes series back into `(prices.csv, caps.csv)` text. Floats are
/// written in shortest round-trip form, so parsing the output reproduces the
/// input exactly.
pub fn write_price_csv(series: &[PriceSeries]) -> (String, String) {
    let mut prices = PRICES_HEADER.join(",");
    prices.push('\n');
    let mut caps = CAPS_HEADER.join(",");
    caps.push('\n');
    for s in series {
        for (d, c) in s.dates.iter().zip(&s.closes) {
            prices.push_str(&format!("{},{},{}\n", d.format(DATE_FORMAT), s.ticker, c));
        }
        caps.push_str(&format!(
            "{},{},{},{}\n",
            s.ticker,
            s.kind,
            s.market_cap,
            s.index_membership.as_deref().unwrap_or("")
        ));
    }
    (prices, caps)
}

/// Simple daily returns restricted to `[-0.10, 0.10]`.
pub fn compute_returns(series: &PriceSeries, clamp: ClampPolicy) -> Result<ReturnSeries, DataError> {
    series.validate()?;
    let returns = series
        .closes
        .windows(2)
        .enumerate()
        .map(|(step, w)| {
            let raw = w[1] / w[0] - 1.0;
            if (RETURN_MIN..=RETURN_MAX).contains(&raw) {
                return Ok(raw);
            }
            match clamp {
                ClampPolicy::Clamp => Ok(raw.clamp(RETURN_MIN, RETURN_MAX)),
                ClampPolicy::Reject => Err(DataError::ReturnOutOfBounds {
                    ticker: series.ticker.clone(),
                    step,
                    value: raw,
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReturnSeries::from_returns(series.ticker.clone(), returns))
}

/// Inner-joins all series on their dates and computes returns on the result.
///
/// Instruments observed on fewer than [`MIN_DATE_COVERAGE`] of the union of
/// dates are dropped (with a warning) before the join.
pub fn align_universe(all: &[PriceSeries], clamp: ClampPolicy) -> Result<Universe, DataError> {
    let mut tickers = BTreeSet::new();
    for s in all {
        if !tickers.insert(s.ticker.as_str()) {
            return Err(DataError::DuplicateTicker(s.ticker.clone()));
        }
    }
    if !all.iter().any(|s| s.kind == InstrumentKind::Index) {
        return Err(DataError::NoIndex);
    }

    let union: BTreeSet<NaiveDate> = all.iter().flat_map(|s| s.dates.iter().copied()).collect();
    let threshold = MIN_DATE_COVERAGE * union.len() as f64;
    let mut kept: Vec<&PriceSeries> = Vec::with_capacity(all.len());
    for s in all {
        if (s.len() as f64) < threshold {
            log::warn!(
                "dropping {}: observed on {} of {} dates",
                s.ticker,
                s.len(),
                union.len()
            );
        } else {
            kept.push(s);
        }
    }
    if kept.is_empty() {
        return Err(DataError::EmptyIntersection);
    }

    let mut common: BTreeSet<NaiveDate> = kept[0].dates.iter().copied().collect();
    for s in &kept[1..] {
        let dates: BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
        common.retain(|d| dates.contains(d));
    }
    if common.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    let common_dates: Vec<NaiveDate> = common.into_iter().collect();

    kept.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    let instruments = kept
        .into_iter()
        .map(|s| {
            let closes = s
                .dates
                .iter()
                .zip(&s.closes)
                .filter(|(d, _)| common_dates.binary_search(d).is_ok())
                .map(|(_, c)| *c)
                .collect();
            let prices = PriceSeries::new(
                s.ticker.clone(),
                s.kind,
                s.market_cap,
                s.index_membership.clone(),
                common_dates.clone(),
                closes,
            )?;
            let returns = compute_returns(&prices, clamp)?;
            Ok(Instrument { prices, returns })
        })
        .collect::<Result<Vec<_>, DataError>>()?;

    let universe = Universe {
        common_dates,
        instruments,
    };
    if universe.count(InstrumentKind::Index) == 0 {
        return Err(DataError::NoIndex);
    }
    if universe.count(InstrumentKind::Stock) == 0 {
        return Err(DataError::NoStock);
    }
    Ok(universe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn series(ticker: &str, kind: InstrumentKind, dates: &[&str], closes: &[f64]) -> PriceSeries {
        PriceSeries::new(
            ticker,
            kind,
            1e9,
            None,
            dates.iter().map(|s| d(s)).collect(),
            closes.to_vec(),
        )
        .unwrap()
    }

    const CAPS: &str = "ticker,kind,market_cap,index_membership\nAAA,stock,5e9,IDX\nIDX,index,1e12,\n";

    #[test]
    fn parses_two_rows_for_one_ticker() {
        let prices = "date,ticker,close\n2023-04-04,AAA,10.5\n2023-04-03,AAA,10\n";
        let out = parse_price_csv(prices.as_bytes(), CAPS.as_bytes()).unwrap();
        assert_eq!(out.len(), 1);
        let s = &out[0];
        assert_eq!(s.len(), 2);
        assert_eq!(s.dates, vec![d("2023-04-03"), d("2023-04-04")]);
        assert_eq!(s.closes, vec![10.0, 10.5]);
        assert_eq!(s.kind, InstrumentKind::Stock);
        assert_eq!(s.index_membership.as_deref(), Some("IDX"));
        assert_eq!(s.market_cap, 5e9);
    }

    #[test]
    fn zero_close_is_rejected() {
        let prices = "date,ticker,close\n2023-04-03,AAA,10\n2023-04-04,AAA,0\n";
        let err = parse_price_csv(prices.as_bytes(), CAPS.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::NonPositivePrice { line: 3, .. }));
        assert!(err.to_string().contains("non-positive price"));
    }

    #[test]
    fn parse_errors_carry_context() {
        let dup = "date,ticker,close\n2023-04-03,AAA,10\n2023-04-03,AAA,11\n";
        assert!(matches!(
            parse_price_csv(dup.as_bytes(), CAPS.as_bytes()),
            Err(DataError::DuplicateObservation { line: 3, .. })
        ));
        let bad = "date,ticker,close\n2023-04-03,AAA,ten\n";
        assert!(matches!(
            parse_price_csv(bad.as_bytes(), CAPS.as_bytes()),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        let short = "date,ticker,close\n2023-04-03,AAA\n";
        assert!(matches!(
            parse_price_csv(short.as_bytes(), CAPS.as_bytes()),
            Err(DataError::MalformedRow { .. })
        ));
        let kind = "ticker,kind,market_cap,index_membership\nAAA,bond,1,\n";
        assert!(matches!(
            parse_price_csv(b"date,ticker,close\n", kind.as_bytes()),
            Err(DataError::UnknownKind { line: 2, .. })
        ));
        let cap = "ticker,kind,market_cap,index_membership\nAAA,stock,-1,\n";
        assert!(matches!(
            parse_price_csv(b"date,ticker,close\n", cap.as_bytes()),
            Err(DataError::NonPositiveCap { .. })
        ));
        let missing = "date,ticker,close\n2023-04-03,ZZZ,1\n2023-04-04,ZZZ,1\n";
        let err = parse_price_csv(missing.as_bytes(), CAPS.as_bytes()).unwrap_err();
        assert_eq!(err, DataError::MissingCap("ZZZ".into()));
        assert!(err.to_string().contains("ZZZ"));
        assert!(matches!(
            parse_price_csv(b"", CAPS.as_bytes()),
            Err(DataError::Empty { .. })
        ));
    }

    #[test]
    fn returns_are_simple_and_bounded() {
        let s = series("A", InstrumentKind::Stock, &["2023-01-02", "2023-01-03", "2023-01-04"], &[
            100.0, 110.0, 99.0,
        ]);
        let r = compute_returns(&s, ClampPolicy::Clamp).unwrap();
        assert_eq!(r.returns.len(), 2);
        assert!((r.returns[0] - 0.10).abs() < 1e-15);
        assert!((r.returns[1] + 0.10).abs() < 1e-15);

        let s = series("A", InstrumentKind::Stock, &["2023-01-02", "2023-01-03"], &[100.0, 121.0]);
        assert_eq!(compute_returns(&s, ClampPolicy::Clamp).unwrap().returns, vec![0.10]);
        assert!(matches!(
            compute_returns(&s, ClampPolicy::Reject),
            Err(DataError::ReturnOutOfBounds { step: 0, .. })
        ));
    }

    #[test]
    fn constant_prices_give_zero_returns_and_zero_std() {
        let s = series("A", InstrumentKind::Stock, &["2023-01-02", "2023-01-03", "2023-01-04"], &[
            7.0, 7.0, 7.0,
        ]);
        let r = compute_returns(&s, ClampPolicy::Reject).unwrap();
        assert_eq!(r.returns, vec![0.0, 0.0]);
        assert_eq!(r.sample_std, 0.0);
        assert_eq!(r.sample_mean, 0.0);
    }

    #[test]
    fn alignment_cases() {
        let dates = ["2023-01-02", "2023-01-03", "2023-01-04", "2023-01-05", "2023-01-06"];
        let idx = series("IDX", InstrumentKind::Index, &dates, &[1.0, 1.01, 1.02, 1.0, 1.03]);
        let a = series("A", InstrumentKind::Stock, &dates, &[5.0, 5.1, 5.0, 5.2, 5.3]);
        let u = align_universe(&[idx.clone(), a.clone()], ClampPolicy::Clamp).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u.common_dates.len(), 5);
        assert!(u.instruments.iter().all(|i| i.returns.len() == 4));
        assert_eq!(u.instruments[0].ticker(), "A");

        let gap = series(
            "B",
            InstrumentKind::Stock,
            &["2023-01-02", "2023-01-03", "2023-01-05", "2023-01-06"],
            &[2.0, 2.1, 2.2, 2.3],
        );
        let u = align_universe(&[idx.clone(), gap], ClampPolicy::Clamp).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u.common_dates.len(), 4);
        assert_eq!(u.get("IDX").unwrap().prices.closes, vec![1.0, 1.01, 1.0, 1.03]);

        let disjoint = series("C", InstrumentKind::Stock, &["2024-01-02", "2024-01-03"], &[1.0, 1.0]);
        let short_idx = series("IDX", InstrumentKind::Index, &["2023-01-02", "2023-01-03"], &[1.0, 1.0]);
        assert_eq!(
            align_universe(&[short_idx, disjoint], ClampPolicy::Clamp),
            Err(DataError::EmptyIntersection)
        );
        assert_eq!(align_universe(std::slice::from_ref(&a), ClampPolicy::Clamp), Err(DataError::NoIndex));
        assert_eq!(align_universe(std::slice::from_ref(&idx), ClampPolicy::Clamp), Err(DataError::NoStock));
        assert!(matches!(
            align_universe(&[idx, a.clone(), a], ClampPolicy::Clamp),
            Err(DataError::DuplicateTicker(_))
        ));
    }

    #[test]
    fn sparse_instrument_is_dropped() {
        let dates: Vec<String> = (2..=11).map(|k| format!("2023-01-{k:02}")).collect();
        let refs: Vec<&str> = dates.iter().map(String::as_str).collect();
        let idx = series("IDX", InstrumentKind::Index, &refs, &[1.0; 10]);
        let full = series("A", InstrumentKind::Stock, &refs, &[1.0; 10]);
        let sparse = series("B", InstrumentKind::Stock, &refs[..7], &[1.0; 7]);
        let u = align_universe(&[idx, full, sparse], ClampPolicy::Clamp).unwrap();
        assert_eq!(u.len(), 2);
        assert!(u.get("B").is_none());
        assert_eq!(u.common_dates.len(), 10);
    }

    fn arb_universe_input() -> impl Strategy<Value = Vec<PriceSeries>> {
        (3usize..12, 1usize..5).prop_flat_map(|(n_days, n_stocks)| {
            let closes = prop::collection::vec(
                prop::collection::vec(0.5f64..200.0, n_days),
                n_stocks + 1,
            );
            let caps = prop::collection::vec(1e6f64..1e12, n_stocks + 1);
            (closes, caps).prop_map(move |(closes, caps)| {
                let start = d("2023-03-31");
                let dates: Vec<NaiveDate> =
                    (0..n_days as i64).map(|k| start + chrono::Days::new(k as u64)).collect();
                closes
                    .into_iter()
                    .zip(caps)
                    .enumerate()
                    .map(|(i, (c, cap))| {
                        let kind = if i == 0 { InstrumentKind::Index } else { InstrumentKind::Stock };
                        let membership = (i > 0).then(|| "I000".to_string());
                        let ticker = if i == 0 { "I000".to_string() } else { format!("S{i:03}") };
                        PriceSeries::new(ticker, kind, cap, membership, dates.clone(), c).unwrap()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(series in arb_universe_input()) {
            let (prices, caps) = write_price_csv(&series);
            let parsed = parse_price_csv(prices.as_bytes(), caps.as_bytes()).unwrap();
            prop_assert_eq!(parsed, series);
        }

        #[test]
        fn aligned_returns_bounded_and_alignment_idempotent(series in arb_universe_input()) {
            let u = align_universe(&series, ClampPolicy::Clamp).unwrap();
            for inst in &u.instruments {
                prop_assert!(inst.returns.returns.iter().all(|r| (RETURN_MIN..=RETURN_MAX).contains(r)));
                prop_assert!(inst.returns.sample_std >= 0.0);
            }
            prop_assert!(u.validate().is_ok());
            let again = align_universe(&u.price_series(), ClampPolicy::Clamp).unwrap();
            prop_assert_eq!(again, u);
        }
    }
}
