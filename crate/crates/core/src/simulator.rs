//! Geometric-Brownian-motion simulation, synthetic option datasets, and
//! the error-minimising-volatility (EMV) sweep.
//!
//! The sweep takes a trained model, regenerates a synthetic market at
//! each test volatility, and plots the model's error metric against the
//! test volatility; the argmin is the EMV. For a model trained on data
//! with a single true volatility the curve should be V-shaped with its
//! bottom near that volatility.

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::black_scholes::{bs_call, BsInputs, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::features::approach1;
use crate::labels::{label_values, scaled_value, BinConfig};
use crate::market_data::{ContractRecord, OptionQuote, UnderlyingBar, WINDOW_LEN};
use crate::metrics::em;
use crate::predictor::ValuePredictor;
use crate::scalar::Real;

/// GBM path parameters. Defaults give the 500-session, 10%-drift setup
/// used throughout the synthetic experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    /// Annualized drift.
    pub mu: f64,
    /// Annualized volatility (decimal).
    pub sigma: f64,
    /// Number of daily closes to generate.
    pub days: usize,
    pub steps_per_year: u32,
    pub s0: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig { mu: 0.1, sigma: 0.13, days: 500, steps_per_year: 252, s0: 100.0, seed: 0 }
    }
}

impl GbmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "volatility must be positive, got {}",
                self.sigma
            )));
        }
        if self.days < 21 {
            return Err(Error::InvalidInput(format!(
                "need at least 21 days to support {WINDOW_LEN}-bar windows, got {}",
                self.days
            )));
        }
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::InvalidInput("starting price must be positive".into()));
        }
        if self.steps_per_year == 0 || !self.mu.is_finite() {
            return Err(Error::InvalidInput("invalid drift or step count".into()));
        }
        Ok(())
    }
}

/// A simulated daily close series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmPath<T> {
    pub prices: Vec<T>,
}

/// Simulates `S_{t+1} = S_t exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z)`
/// with `dt = 1/steps_per_year` and seeded standard-normal draws.
/// Deterministic per seed.
pub fn simulate_gbm<T: Real>(cfg: &GbmConfig) -> Result<GbmPath<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / cfg.steps_per_year as f64;
    let drift = (cfg.mu - cfg.sigma * cfg.sigma / 2.0) * dt;
    let shock_scale = cfg.sigma * dt.sqrt();
    let mut prices = Vec::with_capacity(cfg.days);
    let mut s = cfg.s0;
    prices.push(T::of(s));
    for _ in 1..cfg.days {
        let z: f64 = StandardNormal.sample(&mut rng);
        s *= (drift + shock_scale * z).exp();
        prices.push(T::of(s));
    }
    Ok(GbmPath { prices })
}

/// How the synthetic option chain is laid over a path. The strike grid
/// is 5 strikes equispaced across the near-ATM band `|1 - S/K| <= 0.04`,
/// snapped to a tick of `S0/100` (nudged one tick inward, then left
/// unsnapped, whenever snapping would leave the band).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Flat risk-free rate written into every record.
    pub rate: f64,
    /// Times to maturity quoted every day, in calendar days.
    pub ttms: Vec<i64>,
    /// Calendar date of the first path day.
    pub start_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rate: 0.05,
            ttms: vec![10, 25, 40],
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

/// First path day that becomes a quote day; earlier days only serve as
/// window history.
pub const FIRST_QUOTE_DAY: usize = 21;
/// Strikes quoted per (day, maturity).
pub const STRIKES_PER_DAY: usize = 5;
/// Near-ATM moneyness cap, matching the real-data filter.
pub const MONEYNESS_CAP: f64 = 0.04;

fn within_band(strike: f64, spot: f64) -> bool {
    // |K - S| / K: same exactly-rounded form the ingest filter uses.
    (strike - spot).abs() / strike <= MONEYNESS_CAP
}

/// The day's strike grid: moneyness targets -0.04..0.04 step 0.02,
/// snapped to the tick. Always returns [`STRIKES_PER_DAY`] distinct
/// in-band strikes.
fn strike_grid(spot: f64, tick: f64) -> Vec<f64> {
    let mut strikes: Vec<f64> = Vec::with_capacity(STRIKES_PER_DAY);
    for i in 0..STRIKES_PER_DAY {
        let m = -MONEYNESS_CAP + 0.02 * i as f64; // 1 - S/K
        let raw = spot / (1.0 - m);
        let snapped = (raw / tick).round() * tick;
        let inward = if snapped > spot { snapped - tick } else { snapped + tick };
        // Shrinking the target moneyness a hair keeps the unsnapped
        // fallback strictly inside the band despite rounding.
        let safe = spot / (1.0 - m * (1.0 - 1e-9));
        let k = [snapped, inward, raw, safe]
            .into_iter()
            .find(|&k| k > 0.0 && within_band(k, spot) && !strikes.contains(&k))
            .expect("safe fallback strike is always in band");
        strikes.push(k);
    }
    strikes
}

fn date_of(start: NaiveDate, day: usize) -> NaiveDate {
    start
        .checked_add_days(Days::new(day as u64))
        .expect("synthetic dates stay in range")
}

/// Prices a full synthetic option chain over a path: every day from
/// [`FIRST_QUOTE_DAY`] on, every maturity, every grid strike, priced by
/// Black-Scholes at the path's true volatility. The previous close is
/// the same contract priced one day earlier; flat OHLC bars (O=H=L=C)
/// make up the windows, so the records suit Approach I.
pub fn synth_contracts<T: Real>(
    path: &GbmPath<T>,
    gbm: &GbmConfig,
    synth: &SynthConfig,
) -> Result<Vec<ContractRecord<T>>> {
    if path.prices.len() <= FIRST_QUOTE_DAY {
        return Err(Error::InvalidInput(format!(
            "path has {} days; quotes start on day {FIRST_QUOTE_DAY}",
            path.prices.len()
        )));
    }
    if synth.ttms.is_empty() || synth.ttms.iter().any(|&t| t < 1) {
        return Err(Error::InvalidInput("maturities must be positive".into()));
    }
    if !synth.rate.is_finite() {
        return Err(Error::InvalidInput("rate must be finite".into()));
    }
    let tick = gbm.s0 / 100.0;
    let sigma = gbm.sigma;
    let mut records = Vec::new();
    for day in FIRST_QUOTE_DAY..path.prices.len() {
        let spot = path.prices[day].as_f64();
        let prev_spot = path.prices[day - 1].as_f64();
        let date = date_of(synth.start_date, day);
        let window: Vec<UnderlyingBar<T>> = (day + 1 - WINDOW_LEN..=day)
            .map(|d| {
                let c = path.prices[d];
                UnderlyingBar {
                    date: date_of(synth.start_date, d),
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                }
            })
            .collect();
        for &ttm in &synth.ttms {
            for strike in strike_grid(spot, tick) {
                let close = bs_call(&BsInputs::new(
                    spot,
                    strike,
                    synth.rate,
                    sigma,
                    ttm as f64 / DAYS_PER_YEAR,
                )?);
                let prev_close = bs_call(&BsInputs::new(
                    prev_spot,
                    strike,
                    synth.rate,
                    sigma,
                    (ttm + 1) as f64 / DAYS_PER_YEAR,
                )?);
                records.push(ContractRecord {
                    quote: OptionQuote {
                        date,
                        expiry: date_of(synth.start_date, day + ttm as usize),
                        strike: T::of(strike),
                        close: T::of(close),
                        prev_close: Some(T::of(prev_close)),
                        volume: 1,
                    },
                    spot: T::of(spot),
                    window: window.clone(),
                    ttm_days: ttm,
                    rate: T::of(synth.rate),
                });
            }
        }
    }
    Ok(records)
}

/// One point of an EMV curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmvPoint<T> {
    pub sigma: f64,
    pub em: T,
}

/// The error metric as a function of test volatility, plus its argmin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmvCurve<T> {
    pub points: Vec<EmvPoint<T>>,
    /// Grid argmin of `em`; ties resolve to the lower volatility.
    pub emv: f64,
}

impl<T: Real> EmvCurve<T> {
    /// Builds a curve from scored grid points, validating the grid and
    /// locating the argmin.
    pub fn new(points: Vec<EmvPoint<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("EMV curve needs at least one point".into()));
        }
        for pair in points.windows(2) {
            if !(pair[1].sigma > pair[0].sigma) {
                return Err(Error::InvalidInput(
                    "volatility grid must be strictly increasing".into(),
                ));
            }
        }
        let mut best = 0usize;
        for (i, p) in points.iter().enumerate().skip(1) {
            if p.em < points[best].em {
                best = i;
            }
        }
        let emv = points[best].sigma;
        Ok(EmvCurve { points, emv })
    }

    /// Plot-ready CSV, one `sigma,em` row per grid point.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("sigma,em\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.sigma, p.em);
        }
        out
    }
}

/// The paper's sweep grid: 1% to 20% in 1% steps.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 100.0).collect()
}

/// Sweep controls: the test-volatility grid and how many independent
/// paths to average per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sigma_grid: Vec<f64>,
    pub repetitions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { sigma_grid: default_sigma_grid(), repetitions: 1 }
    }
}

/// Scores a trained Approach-I model across the volatility grid.
///
/// Each grid point simulates a fresh market at that volatility (path
/// seed = base seed + point index, offset further per repetition),
/// prices the synthetic chain, and evaluates the model's EM against the
/// true Black-Scholes bins.
pub fn emv_sweep<T: Real>(
    model: &dyn ValuePredictor<T>,
    base: &GbmConfig,
    synth: &SynthConfig,
    sweep: &SweepConfig,
    bins: &BinConfig<T>,
) -> Result<EmvCurve<T>> {
    if sweep.repetitions == 0 {
        return Err(Error::InvalidInput("need at least one repetition".into()));
    }
    if sweep.sigma_grid.is_empty() {
        return Err(Error::InvalidInput("empty volatility grid".into()));
    }
    let mut points = Vec::with_capacity(sweep.sigma_grid.len());
    for (idx, &sigma) in sweep.sigma_grid.iter().enumerate() {
        let mut em_sum = T::zero();
        for rep in 0..sweep.repetitions {
            let cfg = GbmConfig {
                sigma,
                seed: base
                    .seed
                    .wrapping_add((idx * sweep.repetitions + rep) as u64),
                ..base.clone()
            };
            let path = simulate_gbm::<T>(&cfg)?;
            let records = synth_contracts(&path, &cfg, synth)?;
            let values: Vec<T> = records
                .iter()
                .map(|r| scaled_value(r.quote.close, r.quote.strike))
                .collect::<Result<_>>()?;
            let (actual, _) = label_values(&values, bins);
            let mut predicted = Vec::with_capacity(records.len());
            for r in &records {
                let fv = approach1(r)?;
                predicted.push(model.predict_value(&fv.values)?);
            }
            em_sum += em(&actual, &predicted, bins.width)?;
        }
        points.push(EmvPoint { sigma, em: em_sum / T::of(sweep.repetitions as f64) });
    }
    EmvCurve::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_zero_volatility_reduces_to_the_deterministic_exponential() {
        let cfg = GbmConfig { sigma: 1e-8, days: 500, ..GbmConfig::default() };
        let path: GbmPath<f64> = simulate_gbm(&cfg).unwrap();
        assert_eq!(path.prices.len(), 500);
        let dt = 1.0 / 252.0;
        for (i, &p) in path.prices.iter().enumerate() {
            let want = 100.0 * (0.1 * i as f64 * dt).exp();
            assert!(
                (p - want).abs() / want <= 1e-4,
                "day {i}: {p} vs deterministic {want}"
            );
        }
    }

    #[test]
    fn same_seed_reproduces_the_path_and_different_seeds_differ() {
        let cfg = GbmConfig::default();
        let a: GbmPath<f64> = simulate_gbm(&cfg).unwrap();
        let b: GbmPath<f64> = simulate_gbm(&cfg).unwrap();
        assert_eq!(a, b, "same seed must give identical paths");

        let c: GbmPath<f64> = simulate_gbm(&GbmConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c, "different seeds should give different paths");
    }

    // Law-of-large-numbers oracle: over 1e5 steps the sample standard
    // deviation of log returns estimates sigma sqrt(dt) within 2%.
    #[test]
    fn log_return_std_recovers_sigma() {
        let cfg = GbmConfig { days: 100_001, sigma: 0.13, seed: 2, ..GbmConfig::default() };
        let path: GbmPath<f64> = simulate_gbm(&cfg).unwrap();
        let returns: Vec<f64> =
            path.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var =
            returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        let want = 0.13 / 252.0f64.sqrt();
        let got = var.sqrt();
        assert!(
            (got - want).abs() / want <= 0.02,
            "sample std {got} vs sigma sqrt(dt) {want}"
        );
    }

    #[test]
    fn gbm_config_is_validated() {
        assert!(simulate_gbm::<f64>(&GbmConfig { sigma: 0.0, ..GbmConfig::default() }).is_err());
        assert!(simulate_gbm::<f64>(&GbmConfig { days: 20, ..GbmConfig::default() }).is_err());
        assert!(simulate_gbm::<f64>(&GbmConfig { s0: -1.0, ..GbmConfig::default() }).is_err());
    }

    #[test]
    fn synthetic_record_count_matches_the_combinatorial_oracle() {
        let gbm = GbmConfig { sigma: 0.13, seed: 4, ..GbmConfig::default() };
        let path: GbmPath<f64> = simulate_gbm(&gbm).unwrap();
        let records = synth_contracts(&path, &gbm, &SynthConfig::default()).unwrap();
        // 500 days, quotes from day 21 on, 3 maturities, 5 strikes, and
        // no first-day skips because every quote day has a predecessor.
        let quote_days = 500 - FIRST_QUOTE_DAY;
        assert_eq!(records.len(), quote_days * 3 * STRIKES_PER_DAY, "479 * 3 * 5 = 7185");

        for r in &records {
            let k = r.quote.strike;
            assert!(
                (k - r.spot).abs() / k <= MONEYNESS_CAP,
                "strike {k} drifted out of the near-ATM band around {}",
                r.spot
            );
            assert!(r.quote.prev_close.is_some(), "every synthetic record has a prev close");
            assert_eq!(r.window.len(), WINDOW_LEN);
            assert_eq!(r.window.last().unwrap().close, r.spot);
            assert!(r.quote.close > 0.0 && r.quote.close.is_finite());
            assert_eq!(r.ttm_days % 5, 0, "maturities are 10, 25, 40");
        }

        // Each (day, maturity) slot carries 5 distinct strikes.
        let first_ttm10: Vec<f64> = records
            .iter()
            .take_while(|r| r.ttm_days == 10)
            .map(|r| r.quote.strike)
            .collect();
        assert_eq!(first_ttm10.len(), 5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(first_ttm10[i], first_ttm10[j], "grid strikes must be distinct");
            }
        }
    }

    #[test]
    fn single_day_atm_record_prices_like_black_scholes() {
        // A flat path: strike grid centers on the ATM tick.
        let gbm = GbmConfig { sigma: 0.2, days: 22, seed: 0, ..GbmConfig::default() };
        let path = GbmPath { prices: vec![100.0f64; 22] };
        let synth = SynthConfig { ttms: vec![10], ..SynthConfig::default() };
        let records = synth_contracts(&path, &gbm, &synth).unwrap();
        assert_eq!(records.len(), 5, "one quote day, one maturity, five strikes");
        let atm = records
            .iter()
            .find(|r| r.quote.strike == 100.0)
            .expect("flat path must include the exact ATM strike");
        let want = bs_call(
            &BsInputs::new(100.0, 100.0, 0.05, 0.2, 10.0 / DAYS_PER_YEAR).unwrap(),
        );
        assert_eq!(atm.quote.close, want, "synthetic close is the B-S price");
        // One day earlier the same contract had 11 days to run.
        let want_prev = bs_call(
            &BsInputs::new(100.0, 100.0, 0.05, 0.2, 11.0 / DAYS_PER_YEAR).unwrap(),
        );
        assert_eq!(atm.quote.prev_close, Some(want_prev));
    }

    #[test]
    fn out_of_band_strikes_are_never_emitted() {
        // Strike grids on very low spots have coarse ticks relative to
        // the band; the inward nudge and fallbacks must keep every
        // strike inside |1 - S/K| <= 0.04.
        for spot in [37.0, 52.3, 61.7, 99.5, 153.2, 240.0] {
            let grid = strike_grid(spot, 1.0);
            assert_eq!(grid.len(), STRIKES_PER_DAY);
            for k in grid {
                assert!(
                    within_band(k, spot),
                    "spot {spot}: strike {k} violates the moneyness cap"
                );
                let m = 1.0 - spot / k;
                assert!(m.abs() <= 0.05, "sanity: {m} wildly off target");
            }
        }
    }

    #[test]
    fn emv_curve_validates_and_finds_the_argmin() {
        let curve = EmvCurve::new(vec![
            EmvPoint { sigma: 0.01, em: 0.5f64 },
            EmvPoint { sigma: 0.02, em: 0.2 },
            EmvPoint { sigma: 0.03, em: 0.2 },
            EmvPoint { sigma: 0.04, em: 0.9 },
        ])
        .unwrap();
        assert_eq!(curve.emv, 0.02, "tie resolves to the lower volatility");
        assert_eq!(curve.to_csv(), "sigma,em\n0.01,0.5\n0.02,0.2\n0.03,0.2\n0.04,0.9\n");

        assert!(EmvCurve::<f64>::new(vec![]).is_err());
        let unsorted = vec![
            EmvPoint { sigma: 0.02, em: 0.1f64 },
            EmvPoint { sigma: 0.01, em: 0.2 },
        ];
        assert!(EmvCurve::new(unsorted).is_err(), "grid must increase");
        let duplicated = vec![
            EmvPoint { sigma: 0.02, em: 0.1f64 },
            EmvPoint { sigma: 0.02, em: 0.2 },
        ];
        assert!(EmvCurve::new(duplicated).is_err(), "grid must be strict");
    }

    /// A predictor that scores the true Black-Scholes bin at a fixed
    /// volatility: its EM should bottom out at that volatility.
    struct OracleModel {
        sigma: f64,
        bins: BinConfig<f64>,
    }

    impl ValuePredictor<f64> for OracleModel {
        fn input_len(&self) -> usize {
            crate::features::Approach::I.feature_len()
        }
        fn predict_value(&self, features: &[f64]) -> Result<f64> {
            // Approach I tail: [.., ttm_days, rate, S/K]; spot/strike
            // are recoverable only up to scale, which B-S allows.
            let ttm = features[19];
            let rate = features[20];
            let moneyness = features[21];
            let price = bs_call(&BsInputs::new(
                moneyness,
                1.0,
                rate,
                self.sigma,
                ttm / DAYS_PER_YEAR,
            )?);
            Ok(crate::labels::bin_of(scaled_value(price, 1.0)?, &self.bins).number() as f64)
        }
    }

    #[test]
    fn sweep_bottoms_out_at_the_oracle_volatility() {
        let bins = BinConfig::standard();
        let model = OracleModel { sigma: 0.13, bins };
        let base = GbmConfig { days: 60, seed: 9, ..GbmConfig::default() };
        let sweep = SweepConfig {
            sigma_grid: vec![0.05, 0.09, 0.13, 0.17],
            repetitions: 1,
        };
        let curve =
            emv_sweep(&model, &base, &SynthConfig::default(), &sweep, &bins).unwrap();
        assert_eq!(curve.emv, 0.13, "the oracle model's EM bottoms at its own sigma");
        assert_eq!(curve.points.len(), 4);
        let at = |s: f64| curve.points.iter().find(|p| p.sigma == s).unwrap().em;
        assert!(at(0.05) > at(0.13) && at(0.17) > at(0.13));
        assert!(at(0.13) <= bins.width, "at the true sigma only discretisation error remains");
    }

    #[test]
    fn sweep_is_deterministic() {
        let bins = BinConfig::standard();
        let model = OracleModel { sigma: 0.10, bins };
        let base = GbmConfig { days: 40, seed: 3, ..GbmConfig::default() };
        let sweep = SweepConfig { sigma_grid: vec![0.08, 0.10, 0.12], repetitions: 2 };
        let synth = SynthConfig::default();
        let a = emv_sweep(&model, &base, &synth, &sweep, &bins).unwrap();
        let b = emv_sweep(&model, &base, &synth, &sweep, &bins).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv(), "CSV bytes must match run to run");
    }

    #[test]
    fn sweep_validates_inputs() {
        let bins = BinConfig::standard();
        let model = OracleModel { sigma: 0.1, bins };
        let base = GbmConfig::default();
        let synth = SynthConfig::default();
        let empty = SweepConfig { sigma_grid: vec![], repetitions: 1 };
        assert!(emv_sweep(&model, &base, &synth, &empty, &bins).is_err());
        let zero_reps = SweepConfig { sigma_grid: vec![0.1], repetitions: 0 };
        assert!(emv_sweep(&model, &base, &synth, &zero_reps, &bins).is_err());
    }
}
