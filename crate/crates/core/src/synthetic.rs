//! Seeded one-factor market generator for fixtures and demos.
//!
//! Stock returns follow `r_i = α_i + β_i r_m + σ_i ε_i` around an index
//! return `r_m`; caps are log-uniform and the index cap is the sum of its
//! constituents' caps.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::marketdata::{write_price_csv, InstrumentKind, PriceSeries};

/// Daily moves are kept inside this band so that generated data survive
/// `ClampPolicy::Reject`.
pub const MAX_DAILY_MOVE: f64 = 0.095;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub n_stocks: usize,
    /// Number of trading days, so `n_days - 1` returns.
    pub n_days: usize,
    pub seed: u64,
    pub index_ticker: String,
    pub start: NaiveDate,
    /// Caps are drawn log-uniformly from `[cap_min, cap_max]`.
    pub cap_min: f64,
    pub cap_max: f64,
    pub index_volatility: f64,
}

impl Default for SyntheticMarket {
    fn default() -> Self {
        SyntheticMarket {
            n_stocks: 10,
            n_days: 121,
            seed: 7,
            index_ticker: "IDX".into(),
            start: NaiveDate::from_ymd_opt(2023, 3, 31).expect("valid date"),
            cap_min: 1e9,
            cap_max: 1e12,
            index_volatility: 0.012,
        }
    }
}

/// `n` weekdays starting at `start` (moved forward to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn closes_from(returns: &[f64], first: f64) -> Vec<f64> {
    let mut closes = Vec::with_capacity(returns.len() + 1);
    closes.push(first);
    for r in returns {
        let last = *closes.last().expect("non-empty");
        closes.push(last * (1.0 + r));
    }
    closes
}

impl SyntheticMarket {
    /// Index first, then stocks `S001..`.
    pub fn generate(&self) -> Vec<PriceSeries> {
        assert!(self.n_days >= 2, "need at least two trading days");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dates = business_days(self.start, self.n_days);
        let steps = self.n_days - 1;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let clip = |r: f64| r.clamp(-MAX_DAILY_MOVE, MAX_DAILY_MOVE);

        let market: Vec<f64> = (0..steps)
            .map(|_| clip(0.0003 + self.index_volatility * unit.sample(&mut rng)))
            .collect();

        let width = self.n_stocks.max(1).to_string().len().max(3);
        let (lo, hi) = (self.cap_min.ln(), self.cap_max.ln());
        let mut stocks = Vec::with_capacity(self.n_stocks);
        let mut total_cap = 0.0;
        for i in 0..self.n_stocks {
            let alpha = rng.gen_range(-0.002..0.002);
            let beta = rng.gen_range(0.3..1.6);
            let sigma = rng.gen_range(0.005..0.025);
            let cap = rng.gen_range(lo..hi).exp().round();
            let first = rng.gen_range(5.0..150.0_f64).round();
            let returns: Vec<f64> = market
                .iter()
                .map(|m| clip(alpha + beta * m + sigma * unit.sample(&mut rng)))
                .collect();
            total_cap += cap;
            stocks.push(
                PriceSeries::new(
                    format!("S{:0width$}", i + 1),
                    InstrumentKind::Stock,
                    cap,
                    Some(self.index_ticker.clone()),
                    dates.clone(),
                    closes_from(&returns, first),
                )
                .expect("generated series are valid"),
            );
        }
        let index = PriceSeries::new(
            self.index_ticker.clone(),
            InstrumentKind::Index,
            if total_cap > 0.0 { total_cap } else { self.cap_max },
            None,
            dates,
            closes_from(&market, 4000.0),
        )
        .expect("generated series are valid");
        let mut all = vec![index];
        all.extend(stocks);
        all
    }

    /// `(prices.csv, caps.csv)` text for the generated market.
    pub fn to_csv(&self) -> (String, String) {
        write_price_csv(&self.generate())
    }
}
