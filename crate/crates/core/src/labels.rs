//! Discretisation of scaled option prices into class labels.
//!
//! The regression target is never the raw option close `C`: it is the
//! scaled value `v = 100 * C / K`, chopped into fixed-width bins
//! `((n-1)*w, n*w]` for `n = 1..=n_classes`. A classifier that names the
//! bin therefore prices the option to within `K * w / 100`.
//!
//! Binning is right-closed: a value sitting exactly on `n*w` belongs to
//! bin `n`. Because bin edges like `0.1 * n` are not exactly representable
//! in binary floating point, [`bin_of`] subtracts a small guard before
//! taking the ceiling so that values within rounding distance of an edge
//! land on the mathematically correct side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bin layout: width `w` of each bin on the scaled axis and the number of
/// classes. Values above `n_classes * w` are clamped into the last bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinConfig<T> {
    pub width: T,
    pub n_classes: usize,
}

impl<T: Real> BinConfig<T> {
    pub fn new(width: T, n_classes: usize) -> Result<Self> {
        if !(width > T::zero()) || !width.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bin width must be positive and finite, got {width}"
            )));
        }
        if n_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        Ok(BinConfig { width, n_classes })
    }

    /// The standard layout: width 0.1, 50 classes, covering scaled values
    /// up to 5 (i.e. option prices up to 5% of strike).
    pub fn standard() -> Self {
        BinConfig {
            width: T::of(0.1),
            n_classes: 50,
        }
    }
}

/// 1-based bin number. Bin `n` covers the scaled interval `((n-1)w, nw]`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct BinLabel(u32);

impl BinLabel {
    /// Wraps a 1-based bin number. Panics on 0, which is never a valid bin.
    pub fn of(n: u32) -> Self {
        assert!(n >= 1, "bin numbers are 1-based");
        BinLabel(n)
    }

    /// Checked constructor against a configured class count.
    pub fn checked(n: u32, cfg_classes: usize) -> Result<Self> {
        if n == 0 || n as usize > cfg_classes {
            return Err(Error::InvalidInput(format!(
                "bin {n} outside 1..={cfg_classes}"
            )));
        }
        Ok(BinLabel(n))
    }

    /// The 1-based bin number.
    pub fn number(self) -> u32 {
        self.0
    }

    /// The bin number as a scalar, for arithmetic against predictions.
    pub fn as_real<T: Real>(self) -> T {
        T::of(f64::from(self.0))
    }
}

/// How a value landed in its bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Fell inside `(0, n_classes * w]` and was binned normally.
    Interior,
    /// Exceeded the last edge and was clamped into bin `n_classes`.
    ClampedHigh,
    /// Was zero or negative (a degenerate scaled price); assigned bin 1.
    DegenerateLow,
}

/// Counts of abnormal placements over a batch of values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinStats {
    pub clamped_high: usize,
    pub degenerate_low: usize,
}

/// Scaled target `100 * C / K`.
pub fn scaled_value<T: Real>(close: T, strike: T) -> Result<T> {
    if !(strike > T::zero()) {
        return Err(Error::Domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    if close < T::zero() || !close.is_finite() {
        return Err(Error::Domain(format!(
            "option close must be finite and non-negative, got {close}"
        )));
    }
    Ok(T::of(100.0) * close / strike)
}

/// Guard subtracted from `v / w` before the ceiling, in ratio units.
///
/// `1e-9` absorbs decimal-edge rounding in the `f64` lane (edges like
/// `n * 0.1` round at most a few ulps away from the exact rational). The
/// epsilon-scaled term takes over in wider-ulp lanes such as `f32`, where
/// a fixed `1e-9` would vanish next to the ratio's own rounding error.
fn edge_guard<T: Real>(ratio: T) -> T {
    let scaled = ratio.abs() * T::epsilon() * T::of(8.0);
    T::of(1e-9).max(scaled)
}

/// Bins a scaled value, reporting how it was placed.
pub fn bin_of_checked<T: Real>(v: T, cfg: &BinConfig<T>) -> (BinLabel, Placement) {
    if v <= T::zero() {
        return (BinLabel(1), Placement::DegenerateLow);
    }
    let ratio = v / cfg.width;
    let n = (ratio - edge_guard(ratio)).ceil();
    let n = n.to_u64().unwrap_or(0).max(1);
    if n > cfg.n_classes as u64 {
        (BinLabel(cfg.n_classes as u32), Placement::ClampedHigh)
    } else {
        (BinLabel(n as u32), Placement::Interior)
    }
}

/// Bins a scaled value `v`, clamping values beyond the last edge into the
/// top bin and degenerate (non-positive) values into bin 1.
pub fn bin_of<T: Real>(v: T, cfg: &BinConfig<T>) -> BinLabel {
    bin_of_checked(v, cfg).0
}

/// Bins a batch of scaled values, tallying clamps and degenerate inputs.
pub fn label_values<T: Real>(values: &[T], cfg: &BinConfig<T>) -> (Vec<BinLabel>, BinStats) {
    let mut stats = BinStats::default();
    let labels = values
        .iter()
        .map(|&v| {
            let (label, placement) = bin_of_checked(v, cfg);
            match placement {
                Placement::Interior => {}
                Placement::ClampedHigh => stats.clamped_high += 1,
                Placement::DegenerateLow => stats.degenerate_low += 1,
            }
            label
        })
        .collect();
    (labels, stats)
}

/// The scaled interval `((n-1)w, nw]` covered by a bin.
pub fn bin_interval<T: Real>(label: BinLabel, cfg: &BinConfig<T>) -> (T, T) {
    let n = label.as_real::<T>();
    ((n - T::one()) * cfg.width, n * cfg.width)
}

/// Midpoint of a bin on the scaled axis: `(n - 1/2) * w`.
pub fn mid_value<T: Real>(label: BinLabel, cfg: &BinConfig<T>) -> T {
    (label.as_real::<T>() - T::of(0.5)) * cfg.width
}

/// Bin midpoint mapped back to a price: `K * (n - 1/2) * w / 100`.
pub fn mid_price<T: Real>(label: BinLabel, strike: T, cfg: &BinConfig<T>) -> Result<T> {
    if !(strike > T::zero()) {
        return Err(Error::Domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    Ok(strike * mid_value(label, cfg) / T::of(100.0))
}

/// Half-open price interval `(low, high]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band<T> {
    pub low: T,
    pub high: T,
}

impl<T: Real> Band<T> {
    /// Membership in `(low, high]`.
    pub fn contains(&self, price: T) -> bool {
        price > self.low && price <= self.high
    }
}

/// Price band spanning the predicted bin plus two bins on either side:
/// scaled interval `((n-3)w, (n+2)w]`, mapped to prices and clamped at 0.
///
/// A prediction is conventionally counted correct when the realised price
/// falls in this band, i.e. when the bin error is at most 2.
pub fn price_band<T: Real>(label: BinLabel, strike: T, cfg: &BinConfig<T>) -> Result<Band<T>> {
    if !(strike > T::zero()) {
        return Err(Error::Domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    let n = label.as_real::<T>();
    let scale = strike * cfg.width / T::of(100.0);
    let low = ((n - T::of(3.0)) * scale).max(T::zero());
    let high = (n + T::of(2.0)) * scale;
    Ok(Band { low, high })
}
