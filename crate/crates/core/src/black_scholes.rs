//! Black-Scholes benchmark: pricer, historical-volatility estimator,
//! implied-volatility inverter, and implied-volatility band construction.
//!
//! The pipeline scores its learned models against this classical pricer:
//! each record is priced with the volatility realised over its own 20-bar
//! window, and the price is discretised with the same bin layout the
//! models predict into. Conventions the formula itself does not fix are
//! pinned here: time to expiry is calendar days over [`DAYS_PER_YEAR`],
//! and historical volatility annualizes daily log-return standard
//! deviation by the square root of [`TRADING_DAYS_PER_YEAR`].
//!
//! Special-function evaluation runs in `f64` internally regardless of the
//! pipeline scalar type; accuracy is pinned by series oracles in the
//! tests (absolute CDF error well under 1e-10).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{bin_of, price_band, BinConfig, BinLabel};
use crate::market_data::ContractRecord;
use crate::scalar::Real;

/// Calendar-day denominator for year fractions.
pub const DAYS_PER_YEAR: f64 = 365.0;
/// Trading-day annualization base for historical volatility.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Converts calendar days to expiry into a year fraction.
pub fn tau_years<T: Real>(ttm_days: i64) -> T {
    T::of(ttm_days as f64 / DAYS_PER_YEAR)
}

// ---------------------------------------------------------------------------
// Normal CDF

/// erf(z) for 0 <= z < 2 by its Maclaurin series.
fn erf_series(z: f64) -> f64 {
    let two_over_sqrt_pi = std::f64::consts::FRAC_2_SQRT_PI;
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    for k in 1..200 {
        let k = k as f64;
        term *= -z2 / k;
        let contrib = term / (2.0 * k + 1.0);
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs() + 1e-300 {
            break;
        }
    }
    two_over_sqrt_pi * sum
}

/// erfc(z) for z >= 2 by the Lentz continued fraction
/// `erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))`.
fn erfc_cf(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z.max(tiny);
    let mut c = f;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        // Continued-fraction step: b = z, numerator a_k = k/2.
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let sqrt_pi = 1.772_453_850_905_516;
    (-z * z).exp() / (sqrt_pi * f)
}

fn erfc(z: f64) -> f64 {
    if z < 0.0 {
        2.0 - erfc(-z)
    } else if z < 2.0 {
        1.0 - erf_series(z)
    } else if z < 27.0 {
        erfc_cf(z)
    } else {
        0.0
    }
}

/// Standard normal cumulative distribution function.
pub fn norm_cdf<T: Real>(x: T) -> T {
    let x = x.as_f64();
    let sqrt2 = std::f64::consts::SQRT_2;
    T::of(0.5 * erfc(-x / sqrt2))
}

// ---------------------------------------------------------------------------
// Pricer

/// Validated inputs to the call pricer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsInputs<T> {
    pub spot: T,
    pub strike: T,
    pub rate: T,
    pub sigma: T,
    pub tau_years: T,
}

impl<T: Real> BsInputs<T> {
    pub fn new(spot: T, strike: T, rate: T, sigma: T, tau_years: T) -> Result<Self> {
        if !(spot > T::zero()) || !(strike > T::zero()) {
            return Err(Error::Domain(format!(
                "spot and strike must be positive, got S={spot}, K={strike}"
            )));
        }
        if !(sigma > T::zero()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(tau_years > T::zero()) {
            return Err(Error::Domain(format!(
                "time to expiry must be positive, got {tau_years}"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::Domain(format!("rate must be finite, got {rate}")));
        }
        Ok(BsInputs { spot, strike, rate, sigma, tau_years })
    }
}

/// European call price
/// `C = S Phi(d1) - K e^{-r tau} Phi(d2)`,
/// `d1 = [ln(S/K) + (r + sigma^2/2) tau] / (sigma sqrt(tau))`,
/// `d2 = d1 - sigma sqrt(tau)`.
pub fn bs_call<T: Real>(inputs: &BsInputs<T>) -> T {
    let s = inputs.spot.as_f64();
    let k = inputs.strike.as_f64();
    let r = inputs.rate.as_f64();
    let sigma = inputs.sigma.as_f64();
    let tau = inputs.tau_years.as_f64();
    let vol = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    let price = s * 0.5 * erfc(-d1 / std::f64::consts::SQRT_2)
        - k * (-r * tau).exp() * 0.5 * erfc(-d2 / std::f64::consts::SQRT_2);
    T::of(price)
}

/// Convenience wrapper: validates and prices in one call.
pub fn call_price<T: Real>(spot: T, strike: T, rate: T, sigma: T, tau_years: T) -> Result<T> {
    Ok(bs_call(&BsInputs::new(spot, strike, rate, sigma, tau_years)?))
}

// ---------------------------------------------------------------------------
// Historical volatility

/// Annualized close-to-close volatility of a 20-bar window, with a flag
/// marking degenerate (zero-variance) windows.
///
/// The value is the sample standard deviation (denominator n-1) of the 19
/// log returns, scaled by `sqrt(annualization)`.
pub fn hist_vol_checked<T: Real>(closes: &[T], annualization: f64) -> Result<(T, bool)> {
    let lr = crate::features::log_returns(closes)?;
    let returns = lr.values();
    let n = T::of(returns.len() as f64);
    let mean = returns.iter().copied().sum::<T>() / n;
    let mut acc = T::zero();
    for &r in returns {
        acc += (r - mean) * (r - mean);
    }
    let var = acc / (n - T::one());
    let daily = var.sqrt();
    let vol = daily * T::of(annualization.sqrt());
    Ok((vol, daily == T::zero()))
}

/// Annualized historical volatility over a 20-close window.
pub fn historical_volatility<T: Real>(closes: &[T]) -> Result<T> {
    hist_vol_checked(closes, TRADING_DAYS_PER_YEAR).map(|(v, _)| v)
}

// ---------------------------------------------------------------------------
// Implied volatility

const IV_LO: f64 = 1e-4;
const IV_HI: f64 = 5.0;
const IV_PRICE_TOL: f64 = 1e-8;
const IV_MAX_ITERS: usize = 200;

/// Inverts the call price to an annualized volatility by bisection on
/// `sigma in [1e-4, 5]`, stopping when the repriced value is within 1e-8
/// of `price` or after 200 halvings.
///
/// The price must lie strictly inside the arbitrage bounds
/// `max(S - K e^{-r tau}, 0) < price < S`. A root that falls outside the
/// bracket (prices in the bounds but below the sigma=1e-4 price or above
/// the sigma=5 price) saturates to the nearer bracket endpoint.
pub fn implied_vol<T: Real>(price: T, spot: T, strike: T, rate: T, tau: T) -> Result<T> {
    let p = price.as_f64();
    let s = spot.as_f64();
    let k = strike.as_f64();
    let r = rate.as_f64();
    let t = tau.as_f64();
    if !(s > 0.0) || !(k > 0.0) || !(t > 0.0) {
        return Err(Error::Domain(format!(
            "need positive spot, strike, and tau; got S={s}, K={k}, tau={t}"
        )));
    }
    let lower = (s - k * (-r * t).exp()).max(0.0);
    if !(p > lower) || !(p < s) {
        return Err(Error::NoSolution(format!(
            "price {p} outside arbitrage bounds ({lower}, {s})"
        )));
    }
    let value = |sigma: f64| -> f64 {
        bs_call(&BsInputs { spot: s, strike: k, rate: r, sigma, tau_years: t }) - p
    };
    if value(IV_LO) >= 0.0 {
        return Ok(T::of(IV_LO));
    }
    if value(IV_HI) <= 0.0 {
        return Ok(T::of(IV_HI));
    }
    let (mut lo, mut hi) = (IV_LO, IV_HI);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..IV_MAX_ITERS {
        mid = 0.5 * (lo + hi);
        let f = value(mid);
        if f.abs() <= IV_PRICE_TOL {
            break;
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(T::of(mid))
}

// ---------------------------------------------------------------------------
// Benchmark over records

/// Where the pricer's volatility comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VolSource<T> {
    /// Historical volatility of each record's own 20-bar window.
    Window,
    /// A single known volatility for every record (e.g. the generating
    /// sigma of simulated data).
    Fixed(T),
}

/// Benchmark predictions plus per-record diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct BsBenchmark<T> {
    /// Predicted bin per record (the binned Black-Scholes price).
    pub labels: Vec<BinLabel>,
    /// The raw model price per record.
    pub prices: Vec<T>,
    /// The volatility actually used per record (after flooring).
    pub vols: Vec<T>,
    /// How many window volatilities were degenerate and floored to 1e-4.
    pub floored_vols: usize,
}

/// Prices every record and bins the result with the model's own layout,
/// drawing volatility from `vol`.
pub fn bs_benchmark_with<T: Real>(
    records: &[ContractRecord<T>],
    cfg: &BinConfig<T>,
    vol: VolSource<T>,
) -> Result<BsBenchmark<T>> {
    if let VolSource::Fixed(sigma) = vol {
        if !(sigma > T::zero()) {
            return Err(Error::Domain(format!("fixed sigma must be positive, got {sigma}")));
        }
    }
    let floor = T::of(IV_LO);
    let mut labels = Vec::with_capacity(records.len());
    let mut prices = Vec::with_capacity(records.len());
    let mut vols = Vec::with_capacity(records.len());
    let mut floored_vols = 0usize;
    for rec in records {
        let sigma = match vol {
            VolSource::Fixed(sigma) => sigma,
            VolSource::Window => {
                let (v, degenerate) =
                    hist_vol_checked(&rec.window_closes(), TRADING_DAYS_PER_YEAR)?;
                if degenerate || v < floor {
                    floored_vols += 1;
                    floor
                } else {
                    v
                }
            }
        };
        let price = call_price(rec.spot, rec.quote.strike, rec.rate, sigma, tau_years(rec.ttm_days))?;
        let scaled = T::of(100.0) * price / rec.quote.strike;
        labels.push(bin_of(scaled, cfg));
        prices.push(price);
        vols.push(sigma);
    }
    Ok(BsBenchmark { labels, prices, vols, floored_vols })
}

/// Benchmark with per-record window volatility (the standard scoring run).
pub fn bs_benchmark<T: Real>(
    records: &[ContractRecord<T>],
    cfg: &BinConfig<T>,
) -> Result<BsBenchmark<T>> {
    bs_benchmark_with(records, cfg, VolSource::Window)
}

// ---------------------------------------------------------------------------
// Implied-volatility bands

/// One date of the implied-volatility band: the day's average band edges
/// and the day's average market implied volatility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvBandPoint<T> {
    pub date: NaiveDate,
    pub iv_low: T,
    pub iv_high: T,
    pub iv_market: T,
}

/// The full daily band series with its headline hit rate.
#[derive(Clone, Debug, PartialEq)]
pub struct IvBandSeries<T> {
    pub points: Vec<IvBandPoint<T>>,
    /// Fraction of emitted dates with `iv_low <= iv_market <= iv_high`.
    pub hit_rate: T,
    /// Dates on which no record was invertible (dropped entirely).
    pub dropped_dates: usize,
    /// Individual records skipped because the market close sat outside
    /// the arbitrage bounds.
    pub skipped_records: usize,
}

impl<T: Real> IvBandSeries<T> {
    /// Renders the series as `date,iv_low,iv_high,iv_market` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,iv_low,iv_high,iv_market\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.date, p.iv_low, p.iv_high, p.iv_market);
        }
        out
    }
}

/// Converts per-record bin predictions into a daily implied-volatility
/// band. Each prediction's price band (predicted bin plus/minus two) is
/// clamped just inside the record's arbitrage bounds and inverted at both
/// edges; the market close is inverted as well. Per-date averages of the
/// three volatilities form the series.
pub fn iv_band_series<T: Real>(
    records: &[ContractRecord<T>],
    predictions: &[BinLabel],
    cfg: &BinConfig<T>,
) -> Result<IvBandSeries<T>> {
    if records.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} records but {} predictions",
            records.len(),
            predictions.len()
        )));
    }
    let margin = T::of(1e-8);
    let mut by_date: BTreeMap<NaiveDate, Vec<[T; 3]>> = BTreeMap::new();
    let mut skipped_records = 0usize;
    let mut dates_seen: BTreeMap<NaiveDate, ()> = BTreeMap::new();
    for (rec, &label) in records.iter().zip(predictions) {
        dates_seen.insert(rec.quote.date, ());
        let tau: T = tau_years(rec.ttm_days);
        let s = rec.spot;
        let k = rec.quote.strike;
        let lower = (s - k * (-rec.rate * tau).exp()).max(T::zero());
        let (lo_ok, hi_ok) = (lower + margin, s - margin);
        if !(lo_ok < hi_ok) {
            skipped_records += 1;
            continue;
        }
        let close = rec.quote.close;
        if !(close > lower && close < s) {
            skipped_records += 1;
            continue;
        }
        let band = price_band(label, k, cfg)?;
        let lo_price = band.low.max(lo_ok).min(hi_ok);
        let hi_price = band.high.max(lo_ok).min(hi_ok);
        let iv_low = implied_vol(lo_price, s, k, rec.rate, tau)?;
        let iv_high = implied_vol(hi_price, s, k, rec.rate, tau)?;
        let iv_market = implied_vol(close, s, k, rec.rate, tau)?;
        by_date.entry(rec.quote.date).or_default().push([iv_low, iv_high, iv_market]);
    }
    let dropped_dates = dates_seen.len() - by_date.len();
    let mut points = Vec::with_capacity(by_date.len());
    let mut hits = 0usize;
    for (date, rows) in by_date {
        let n = T::of(rows.len() as f64);
        let mut sums = [T::zero(); 3];
        for row in &rows {
            for (acc, &v) in sums.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let [iv_low, iv_high, iv_market] = sums.map(|s| s / n);
        if iv_low <= iv_market && iv_market <= iv_high {
            hits += 1;
        }
        points.push(IvBandPoint { date, iv_low, iv_high, iv_market });
    }
    let hit_rate = if points.is_empty() {
        T::zero()
    } else {
        T::of(hits as f64) / T::of(points.len() as f64)
    };
    Ok(IvBandSeries { points, hit_rate, dropped_dates, skipped_records })
}
