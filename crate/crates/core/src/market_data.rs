//! CSV ingestion and dataset assembly.
//!
//! Three CSV inputs feed the pipeline: an underlying OHLC series, an
//! option-chain quote file, and a bond-yield series. [`build_records`]
//! joins them into [`ContractRecord`]s (one per option quote, each
//! carrying a 20-bar underlying window), [`filter_records`] applies the
//! liquidity and near-the-money screens, and [`chronological_split`]
//! produces a leakage-free train/test split at a date boundary.
//!
//! Parsers are strict: a malformed row fails with the file name and
//! 1-based line number rather than being silently skipped. Blank lines
//! are ignored.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of underlying bars in every record's trailing window.
pub const WINDOW_LEN: usize = 20;

/// One daily bar of the underlying asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnderlyingBar<T> {
    pub date: NaiveDate,
    pub open: T,
    pub high: T,
    pub low: T,
    pub close: T,
}

/// One option-chain row: a call quoted on `date`, expiring on `expiry`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote<T> {
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: T,
    pub close: T,
    /// Previous session's close for the same contract, when reported.
    pub prev_close: Option<T>,
    pub volume: u64,
}

/// One point of the short-tenor sovereign yield series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldPoint<T> {
    pub date: NaiveDate,
    pub rate: T,
}

/// A fully joined training/evaluation example: the quote itself, the spot
/// and 20-bar window of the underlying ending on the quote date, calendar
/// time to expiry, and the risk-free rate in force on the quote date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractRecord<T> {
    pub quote: OptionQuote<T>,
    /// Underlying close on the quote date (last close of `window`).
    pub spot: T,
    /// Exactly [`WINDOW_LEN`] bars with strictly increasing dates, the
    /// last of which falls on the quote date.
    pub window: Vec<UnderlyingBar<T>>,
    /// Calendar days from quote date to expiry; at least 1.
    pub ttm_days: i64,
    /// Annualized decimal rate (e.g. 0.065).
    pub rate: T,
}

impl<T: Real> ContractRecord<T> {
    /// The 20 window closes, oldest first.
    pub fn window_closes(&self) -> Vec<T> {
        self.window.iter().map(|b| b.close).collect()
    }
}

/// Chronologically disjoint train/test datasets: every training date
/// strictly precedes every test date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset<T> {
    pub train: Vec<ContractRecord<T>>,
    pub test: Vec<ContractRecord<T>>,
}

/// Per-rule counts of quotes dropped while building records. A quote is
/// counted under the first rule that rejects it, in the order below.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDrops {
    /// No bar on the quote date, or fewer than 20 bars ending there.
    pub insufficient_window: usize,
    /// Expiry on or before the quote date.
    pub nonpositive_ttm: usize,
    /// No yield observation on or before the quote date.
    pub no_yield: usize,
}

/// Records built from quotes plus an account of what was dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildOutcome<T> {
    pub records: Vec<ContractRecord<T>>,
    pub drops: BuildDrops,
}

/// Per-rule counts of records rejected by [`filter_records`]. A record
/// failing several screens is counted under each of them, so the fields
/// can sum to more than the number of dropped records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDrops {
    /// |1 - S/K| > 0.04.
    pub moneyness: usize,
    /// Time to expiry outside 3..=45 days.
    pub ttm_range: usize,
    /// Previous close absent or not positive.
    pub prev_close: usize,
    /// Zero traded volume.
    pub untraded: usize,
}

/// Filtered records plus an account of what was dropped and why.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome<T> {
    pub records: Vec<ContractRecord<T>>,
    pub dropped: usize,
    pub drops: FilterDrops,
}

// ---------------------------------------------------------------------------
// CSV plumbing

fn open_buffered(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Splits a plain (unquoted) CSV line into trimmed fields.
fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn check_header(line: Option<&str>, expected: &str, path: &Path) -> Result<()> {
    let got = line.map(|l| l.trim_start_matches('\u{feff}').trim()).unwrap_or("");
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{expected}`, found `{got}`"),
        ));
    }
    Ok(())
}

fn parse_date(s: &str, field: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| Error::parse(path, line, format!("{field} `{s}` is not a YYYY-MM-DD date")))
}

fn parse_number<T: Real>(s: &str, field: &str, path: &Path, line: usize) -> Result<T> {
    let x: f64 = s
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{field} `{s}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::parse(path, line, format!("{field} `{s}` is not finite")));
    }
    T::from_f64(x)
        .ok_or_else(|| Error::parse(path, line, format!("{field} `{s}` not representable")))
}

/// Iterates non-blank data lines of a CSV after validating the header,
/// handing each to `row` along with its 1-based line number.
fn for_each_row<R: BufRead>(
    reader: R,
    header: &str,
    path: &Path,
    mut row: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let mut lines = reader.lines().enumerate();
    let first = match lines.next() {
        Some((_, line)) => Some(line.map_err(|e| Error::io(path, e))?),
        None => None,
    };
    check_header(first.as_deref(), header, path)?;
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row(idx + 1, line.trim_end_matches('\r'))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Parsers

pub const UNDERLYING_HEADER: &str = "date,open,high,low,close";
pub const OPTION_HEADER: &str = "date,expiry,strike,close,prev_close,volume";
pub const YIELD_HEADER: &str = "date,rate";

/// Parses an underlying OHLC series from any reader. Rows may arrive in
/// any order; the result is sorted by date. Duplicate dates are an error.
pub fn parse_underlying_reader<T: Real, R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<Vec<UnderlyingBar<T>>> {
    let mut bars: Vec<UnderlyingBar<T>> = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_row(reader, UNDERLYING_HEADER, path, |line_no, line| {
        let f = fields(line);
        if f.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let date = parse_date(f[0], "date", path, line_no)?;
        if !seen.insert(date) {
            return Err(Error::parse(path, line_no, format!("duplicate date {date}")));
        }
        let open: T = parse_number(f[1], "open", path, line_no)?;
        let high: T = parse_number(f[2], "high", path, line_no)?;
        let low: T = parse_number(f[3], "low", path, line_no)?;
        let close: T = parse_number(f[4], "close", path, line_no)?;
        if !(low > T::zero()) {
            return Err(Error::parse(path, line_no, format!("low {low} must be positive")));
        }
        if low > open.min(close) || high < open.max(close) {
            return Err(Error::parse(
                path,
                line_no,
                format!("bar violates low <= open,close <= high (o={open} h={high} l={low} c={close})"),
            ));
        }
        bars.push(UnderlyingBar { date, open, high, low, close });
        Ok(())
    })?;
    bars.sort_by_key(|b| b.date);
    Ok(bars)
}

/// Parses `date,open,high,low,close` rows from a file. See
/// [`parse_underlying_reader`] for the row rules.
pub fn parse_underlying_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<UnderlyingBar<T>>> {
    let path = path.as_ref();
    parse_underlying_reader(open_buffered(path)?, path)
}

/// Parses option quotes from any reader, preserving file order. An empty
/// `prev_close` field means the previous close was not reported.
pub fn parse_option_reader<T: Real, R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<Vec<OptionQuote<T>>> {
    let mut quotes = Vec::new();
    for_each_row(reader, OPTION_HEADER, path, |line_no, line| {
        let f = fields(line);
        if f.len() != 6 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let date = parse_date(f[0], "date", path, line_no)?;
        let expiry = parse_date(f[1], "expiry", path, line_no)?;
        if expiry < date {
            return Err(Error::parse(
                path,
                line_no,
                format!("expiry {expiry} precedes quote date {date}"),
            ));
        }
        let strike: T = parse_number(f[2], "strike", path, line_no)?;
        if !(strike > T::zero()) {
            return Err(Error::parse(path, line_no, format!("strike {strike} must be positive")));
        }
        let close: T = parse_number(f[3], "close", path, line_no)?;
        if close < T::zero() {
            return Err(Error::parse(path, line_no, format!("close {close} must be non-negative")));
        }
        let prev_close = if f[4].is_empty() {
            None
        } else {
            let p: T = parse_number(f[4], "prev_close", path, line_no)?;
            if p < T::zero() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("prev_close {p} must be non-negative"),
                ));
            }
            Some(p)
        };
        let volume: u64 = f[5]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("volume `{}` is not a count", f[5])))?;
        quotes.push(OptionQuote { date, expiry, strike, close, prev_close, volume });
        Ok(())
    })?;
    Ok(quotes)
}

/// Parses `date,expiry,strike,close,prev_close,volume` rows from a file.
pub fn parse_option_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<OptionQuote<T>>> {
    let path = path.as_ref();
    parse_option_reader(open_buffered(path)?, path)
}

/// Parses a yield series from any reader; sorted by date, duplicate dates
/// rejected. Rates are annualized decimals and must exceed -0.05.
pub fn parse_yield_reader<T: Real, R: BufRead>(reader: R, path: &Path) -> Result<Vec<YieldPoint<T>>> {
    let mut points: Vec<YieldPoint<T>> = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_row(reader, YIELD_HEADER, path, |line_no, line| {
        let f = fields(line);
        if f.len() != 2 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 2 fields, found {}", f.len()),
            ));
        }
        let date = parse_date(f[0], "date", path, line_no)?;
        if !seen.insert(date) {
            return Err(Error::parse(path, line_no, format!("duplicate date {date}")));
        }
        let rate: T = parse_number(f[1], "rate", path, line_no)?;
        if rate <= T::of(-0.05) {
            return Err(Error::parse(
                path,
                line_no,
                format!("rate {rate} below sanity bound -0.05"),
            ));
        }
        points.push(YieldPoint { date, rate });
        Ok(())
    })?;
    points.sort_by_key(|p| p.date);
    Ok(points)
}

/// Parses `date,rate` rows from a file.
pub fn parse_yield_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<YieldPoint<T>>> {
    let path = path.as_ref();
    parse_yield_reader(open_buffered(path)?, path)
}

// ---------------------------------------------------------------------------
// Assembly

/// Total order on records so that assembly output is independent of input
/// quote order: by date, expiry, strike, then remaining quote fields.
fn record_order<T: Real>(a: &ContractRecord<T>, b: &ContractRecord<T>) -> std::cmp::Ordering {
    let ka = (&a.quote.date, &a.quote.expiry);
    let kb = (&b.quote.date, &b.quote.expiry);
    ka.cmp(&kb)
        .then_with(|| a.quote.strike.partial_cmp(&b.quote.strike).expect("finite strike"))
        .then_with(|| a.quote.close.partial_cmp(&b.quote.close).expect("finite close"))
        .then_with(|| a.quote.volume.cmp(&b.quote.volume))
}

/// Joins quotes with underlying windows and yields.
///
/// Each quote needs a bar on its quote date, 19 more bars before it, an
/// expiry strictly after the quote date, and a yield observation on or
/// before the quote date (most recent wins). Quotes failing any of these
/// are dropped and tallied in [`BuildDrops`]. Output is sorted by
/// (date, expiry, strike).
pub fn build_records<T: Real>(
    bars: &[UnderlyingBar<T>],
    quotes: &[OptionQuote<T>],
    yields: &[YieldPoint<T>],
) -> Result<BuildOutcome<T>> {
    for pair in bars.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(Error::InvalidInput(format!(
                "bars must be sorted with distinct dates; saw {} then {}",
                pair[0].date, pair[1].date
            )));
        }
    }
    for pair in yields.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(Error::InvalidInput(format!(
                "yields must be sorted with distinct dates; saw {} then {}",
                pair[0].date, pair[1].date
            )));
        }
    }

    let mut records = Vec::new();
    let mut drops = BuildDrops::default();
    for quote in quotes {
        // Index of the bar on the quote date, if the date traded at all.
        let bar_idx = match bars.binary_search_by_key(&quote.date, |b| b.date) {
            Ok(i) => i,
            Err(_) => {
                drops.insufficient_window += 1;
                continue;
            }
        };
        if bar_idx + 1 < WINDOW_LEN {
            drops.insufficient_window += 1;
            continue;
        }
        let ttm_days = (quote.expiry - quote.date).num_days();
        if ttm_days < 1 {
            drops.nonpositive_ttm += 1;
            continue;
        }
        // Most recent yield on or before the quote date.
        let n_before = yields.partition_point(|p| p.date <= quote.date);
        let rate = match n_before.checked_sub(1).map(|i| yields[i].rate) {
            Some(r) => r,
            None => {
                drops.no_yield += 1;
                continue;
            }
        };
        let window = bars[bar_idx + 1 - WINDOW_LEN..=bar_idx].to_vec();
        let spot = window[WINDOW_LEN - 1].close;
        records.push(ContractRecord { quote: quote.clone(), spot, window, ttm_days, rate });
    }
    records.sort_by(record_order);
    Ok(BuildOutcome { records, drops })
}

/// Applies the four screens: near the money (|1 - S/K| <= 0.04), time to
/// expiry in 3..=45 calendar days, a positive previous close, and nonzero
/// traded volume. Records pass only if every screen passes.
pub fn filter_records<T: Real>(records: &[ContractRecord<T>]) -> FilterOutcome<T> {
    let moneyness_cap = T::of(0.04);
    let mut kept = Vec::new();
    let mut drops = FilterDrops::default();
    let mut dropped = 0usize;
    for rec in records {
        // |1 - S/K| written as |K - S| / K: same quantity, but exact at
        // round-number boundaries where `1 - S/K` picks up rounding error.
        let near_money = (rec.quote.strike - rec.spot).abs() / rec.quote.strike <= moneyness_cap;
        let ttm_ok = (3..=45).contains(&rec.ttm_days);
        let prev_ok = rec.quote.prev_close.is_some_and(|p| p > T::zero());
        let traded = rec.quote.volume > 0;
        if near_money && ttm_ok && prev_ok && traded {
            kept.push(rec.clone());
        } else {
            dropped += 1;
            drops.moneyness += usize::from(!near_money);
            drops.ttm_range += usize::from(!ttm_ok);
            drops.prev_close += usize::from(!prev_ok);
            drops.untraded += usize::from(!traded);
        }
    }
    FilterOutcome { records: kept, dropped, drops }
}

/// Splits records at the date boundary whose train share is nearest
/// `train_fraction * n`, keeping all records of a date on one side.
///
/// Fails if the records span fewer than two distinct dates (no boundary
/// exists) or if the same contract appears twice on one date.
pub fn chronological_split<T: Real>(
    records: &[ContractRecord<T>],
    train_fraction: f64,
) -> Result<SplitDataset<T>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(record_order);
    for pair in sorted.windows(2) {
        let (a, b) = (&pair[0].quote, &pair[1].quote);
        if a.date == b.date && a.expiry == b.expiry && a.strike == b.strike {
            let mut what = String::new();
            let _ = write!(what, "contract {} expiry {} strike {}", a.date, a.expiry, a.strike);
            return Err(Error::InvalidInput(format!("duplicate record: {what}")));
        }
    }

    // Cumulative record count at each distinct-date boundary.
    let mut boundaries: Vec<usize> = Vec::new();
    for i in 1..sorted.len() {
        if sorted[i].quote.date != sorted[i - 1].quote.date {
            boundaries.push(i);
        }
    }
    if boundaries.is_empty() {
        return Err(Error::InvalidInput(
            "all records share one date; no chronological boundary exists".into(),
        ));
    }
    let target = train_fraction * sorted.len() as f64;
    let cut = *boundaries
        .iter()
        .min_by(|&&a, &&b| {
            let da = (a as f64 - target).abs();
            let db = (b as f64 - target).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .expect("boundaries non-empty");
    let test = sorted.split_off(cut);
    Ok(SplitDataset { train: sorted, test })
}
