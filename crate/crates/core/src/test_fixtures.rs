//! Shared fixtures for unit tests: deterministic records built from small
//! dyadic rationals (exact in binary floating point), so golden values
//! computed by an external tool from the same integers match bit-for-bit
//! on the input side.

use chrono::NaiveDate;

use crate::market_data::{ContractRecord, OptionQuote, UnderlyingBar, WINDOW_LEN};

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Days::new(i as u64)
}

/// A record whose bars are flat (open = high = low = close) at the given
/// closes. Useful when only close-derived features matter or when all
/// four series should coincide.
pub(crate) fn record_from_closes(
    closes: &[f64],
    strike: f64,
    ttm_days: i64,
    rate: f64,
    prev_close: Option<f64>,
) -> ContractRecord<f64> {
    assert_eq!(closes.len(), WINDOW_LEN);
    let window: Vec<UnderlyingBar<f64>> = closes
        .iter()
        .enumerate()
        .map(|(i, &c)| UnderlyingBar { date: day(i), open: c, high: c, low: c, close: c })
        .collect();
    let spot = closes[WINDOW_LEN - 1];
    let date = window[WINDOW_LEN - 1].date;
    ContractRecord {
        quote: OptionQuote {
            date,
            expiry: date + chrono::Days::new(ttm_days as u64),
            strike,
            close: 2.0,
            prev_close,
            volume: 500,
        },
        spot,
        window,
        ttm_days,
        rate,
    }
}

/// The standard non-trivial fixture: a 20-bar window of dyadic OHLC
/// prices generated from integer recurrences, quoted against strike 104
/// with 10 days to expiry.
///
/// For bar i (0-based):
/// ```text
/// a = ((7i + 3)(5i + 11)) mod 23      close = 100 + a/8
/// b = (3i + 1) mod 7                  open  = close - b/16
/// c = (2i + 5) mod 5                  high  = max(open, close) + c/16
/// d = (i + 2) mod 4 + 1               low   = min(open, close) - d/16
/// ```
pub(crate) fn fixture_record() -> ContractRecord<f64> {
    let mut window = Vec::with_capacity(WINDOW_LEN);
    for i in 0..WINDOW_LEN {
        let a = ((7 * i + 3) * (5 * i + 11)) % 23;
        let close = 100.0 + a as f64 / 8.0;
        let b = (3 * i + 1) % 7;
        let open = close - b as f64 / 16.0;
        let c = (2 * i + 5) % 5;
        let high = open.max(close) + c as f64 / 16.0;
        let d = (i + 2) % 4 + 1;
        let low = open.min(close) - d as f64 / 16.0;
        window.push(UnderlyingBar { date: day(i), open, high, low, close });
    }
    let spot = window[WINDOW_LEN - 1].close;
    let date = window[WINDOW_LEN - 1].date;
    ContractRecord {
        quote: OptionQuote {
            date,
            expiry: date + chrono::Days::new(10),
            strike: 104.0,
            close: 2.375,
            prev_close: Some(1.75),
            volume: 500,
        },
        spot,
        window,
        ttm_days: 10,
        rate: 0.0625,
    }
}

/// The same record with spot, strike, option closes, and all window
/// prices multiplied by `c` (the joint rescaling of the homogeneity
/// property).
pub(crate) fn scale_record(rec: &ContractRecord<f64>, c: f64) -> ContractRecord<f64> {
    let mut out = rec.clone();
    out.spot *= c;
    out.quote.strike *= c;
    out.quote.close *= c;
    out.quote.prev_close = out.quote.prev_close.map(|p| p * c);
    for bar in &mut out.window {
        bar.open *= c;
        bar.high *= c;
        bar.low *= c;
        bar.close *= c;
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Small
/// and slow, but independent of any library — used as a PSD oracle.
// The (p, q) index pairs sweep the strict upper triangle; iterator forms
// obscure that structure, so keep the classical indexed loops.
#[allow(clippy::needless_range_loop)]
pub(crate) fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < 1e-15 {
            break;
        }
        assert!(sweep < 199, "jacobi failed to converge");
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for (k, (apk, aqk)) in rp.iter().zip(&rq).enumerate() {
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub(crate) fn symmetric_eigenvalues_4(m: &[[f64; 4]; 4]) -> Vec<f64> {
    jacobi_eigenvalues(m.iter().map(|r| r.to_vec()).collect())
}
