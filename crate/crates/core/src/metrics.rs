//! Evaluation metrics on the bin scale.
//!
//! Everything here scores numeric predictions `P_i` against actual bin
//! labels `C_i`:
//!
//! * accuracy `A = (exact hits) / T`,
//! * the error metric `EM = (w/T) * sum |C_i - P_i|` — mean absolute bin
//!   distance rescaled to the value axis, the paperwork's headline number,
//! * the inaccuracy `rho = #{ |C_i - P_i| > 2 } / T` (strictly greater:
//!   a half-integer error of 2.5 is a miss, an error of exactly 2 is not),
//! * empirical quantiles and the CDF of the signed error `C_i - P_i`,
//! * a total-least-squares diagnostic regressing actual prices on
//!   predicted mid-bin prices (slope near 1 means unbiased pricing).
//!
//! [`em_vs_binwidth`] re-runs a training procedure across bin widths to
//! show how EM responds to the label discretisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::labels::{bin_of, BinConfig, BinLabel};
use crate::predictor::ValuePredictor;
use crate::scalar::Real;

/// Headline evaluation numbers for one prediction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub accuracy: T,
    pub em: T,
    pub rho: T,
    /// 1 - rho: fraction of records whose actual bin lies within two bins
    /// of the prediction (the "predicted band").
    pub band_hit_rate: T,
    /// (quantile, signed error C - P at that quantile), nearest-rank.
    pub error_quantiles: Vec<(f64, T)>,
    pub n: usize,
}

/// Orthogonal-regression line through (predicted mid price, actual price).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostic<T> {
    pub slope: T,
    pub intercept: T,
}

fn check_lengths(actual: usize, predicted: usize) -> Result<()> {
    if actual == 0 {
        return Err(Error::InvalidInput("metrics need at least one sample".into()));
    }
    if actual != predicted {
        return Err(Error::InvalidInput(format!(
            "paired series lengths differ: {actual} vs {predicted}"
        )));
    }
    Ok(())
}

/// Exact-match fraction. Half-integer predictions never match.
pub fn accuracy<T: Real>(actual: &[BinLabel], predicted: &[T]) -> Result<T> {
    check_lengths(actual.len(), predicted.len())?;
    let hits = actual
        .iter()
        .zip(predicted)
        .filter(|(c, &p)| c.as_real::<T>() == p)
        .count();
    Ok(T::of(hits as f64) / T::of(actual.len() as f64))
}

/// Error metric `EM = w * mean |C_i - P_i|`.
pub fn em<T: Real>(actual: &[BinLabel], predicted: &[T], width: T) -> Result<T> {
    check_lengths(actual.len(), predicted.len())?;
    if !(width > T::zero()) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {width}")));
    }
    let mut acc = T::zero();
    for (c, &p) in actual.iter().zip(predicted) {
        acc += (c.as_real::<T>() - p).abs();
    }
    Ok(width * (acc / T::of(actual.len() as f64)))
}

/// Inaccuracy `rho`: fraction of samples with `|C_i - P_i| > 2` (strict).
pub fn rho<T: Real>(actual: &[BinLabel], predicted: &[T]) -> Result<T> {
    check_lengths(actual.len(), predicted.len())?;
    let two = T::of(2.0);
    let misses = actual
        .iter()
        .zip(predicted)
        .filter(|(c, &p)| (c.as_real::<T>() - p).abs() > two)
        .count();
    Ok(T::of(misses as f64) / T::of(actual.len() as f64))
}

/// Empirical distribution of the signed error `C_i - P_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution<T> {
    /// (requested quantile, nearest-rank value).
    pub quantiles: Vec<(f64, T)>,
    /// Empirical CDF: (error value, fraction of samples <= value), one
    /// point per distinct error value, ascending.
    pub cdf: Vec<(T, f64)>,
}

/// Signed-error quantiles (nearest rank: the `ceil(q*n)`-th smallest) and
/// the full empirical CDF.
pub fn error_distribution<T: Real>(
    actual: &[BinLabel],
    predicted: &[T],
    quantiles: &[f64],
) -> Result<ErrorDistribution<T>> {
    check_lengths(actual.len(), predicted.len())?;
    for &q in quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidInput(format!("quantile must lie in (0, 1), got {q}")));
        }
    }
    let mut errors: Vec<T> = actual
        .iter()
        .zip(predicted)
        .map(|(c, &p)| c.as_real::<T>() - p)
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = errors.len();
    let picked = quantiles
        .iter()
        .map(|&q| {
            let rank = (q * n as f64).ceil() as usize;
            (q, errors[rank.clamp(1, n) - 1])
        })
        .collect();
    let mut cdf = Vec::new();
    let mut i = 0;
    while i < n {
        let v = errors[i];
        let mut j = i + 1;
        while j < n && errors[j] == v {
            j += 1;
        }
        cdf.push((v, j as f64 / n as f64));
        i = j;
    }
    Ok(ErrorDistribution { quantiles: picked, cdf })
}

/// Renders a CDF as `error,cumulative_fraction` CSV.
pub fn cdf_to_csv<T: Real>(dist: &ErrorDistribution<T>) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("error,cumulative_fraction\n");
    for (v, f) in &dist.cdf {
        let _ = writeln!(out, "{v},{f}");
    }
    out
}

/// Bundles accuracy, EM, rho, band hit rate, and error quantiles.
pub fn metrics_report<T: Real>(
    actual: &[BinLabel],
    predicted: &[T],
    cfg: &BinConfig<T>,
    quantiles: &[f64],
) -> Result<MetricsReport<T>> {
    let accuracy = accuracy(actual, predicted)?;
    let em = em(actual, predicted, cfg.width)?;
    let rho = rho(actual, predicted)?;
    let dist = error_distribution(actual, predicted, quantiles)?;
    Ok(MetricsReport {
        accuracy,
        em,
        rho,
        band_hit_rate: T::one() - rho,
        error_quantiles: dist.quantiles,
        n: actual.len(),
    })
}

/// Total-least-squares line through `(x_i, y_i)` with unit error-variance
/// ratio: the first principal axis of the centered scatter.
///
/// Fails on fewer than two distinct points (no direction), on identical
/// points, and on a vertical principal axis (slope undefined).
pub fn orthogonal_regression<T: Real>(x: &[T], y: &[T]) -> Result<RegressionDiagnostic<T>> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidInput("orthogonal regression needs >= 2 points".into()));
    }
    let n = T::of(x.len() as f64);
    let mean_x = x.iter().copied().sum::<T>() / n;
    let mean_y = y.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == T::zero() {
        return Err(Error::Degenerate("all regression points are identical".into()));
    }
    // Principal-axis angle of the centered scatter. atan2 handles every
    // sign case; the tangent blows up only for a vertical axis.
    let angle = 0.5 * (2.0 * sxy.as_f64()).atan2(sxx.as_f64() - syy.as_f64());
    if angle.cos().abs() < 1e-12 {
        return Err(Error::Degenerate(
            "principal axis is vertical; slope undefined".into(),
        ));
    }
    let slope = T::of(angle.tan());
    if !slope.is_finite() {
        return Err(Error::Degenerate("regression slope not finite".into()));
    }
    let intercept = mean_y - slope * mean_x;
    Ok(RegressionDiagnostic { slope, intercept })
}

/// One row of the EM-vs-bin-width study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEmPoint<T> {
    pub width: T,
    pub n_classes: usize,
    pub em: T,
}

/// The features and scaled target values the study retrains on.
pub struct BinwidthStudyData<'a, T> {
    pub train_features: &'a [FeatureVector<T>],
    /// Scaled values `100 C / K` for the training records.
    pub train_values: &'a [T],
    pub test_features: &'a [FeatureVector<T>],
    pub test_values: &'a [T],
}

/// A procedure that trains some model on labelled features under a given
/// bin layout.
pub type Trainer<'t, T> = dyn FnMut(
        &[FeatureVector<T>],
        &[BinLabel],
        &BinConfig<T>,
    ) -> Result<Box<dyn ValuePredictor<T>>>
    + 't;

/// Re-bins, re-trains, and re-scores once per width.
///
/// The class count for each width is chosen so the largest value in the
/// data still lands in a real bin (no top-clamping distorts the study):
/// `n_classes = ceil(max_value / w)`, at least 2.
pub fn em_vs_binwidth<T: Real>(
    data: &BinwidthStudyData<'_, T>,
    widths: &[T],
    trainer: &mut Trainer<'_, T>,
) -> Result<Vec<WidthEmPoint<T>>> {
    if widths.is_empty() {
        return Err(Error::InvalidInput("need at least one width".into()));
    }
    if data.train_features.len() != data.train_values.len()
        || data.test_features.len() != data.test_values.len()
    {
        return Err(Error::InvalidInput("features and values must align".into()));
    }
    let max_value = data
        .train_values
        .iter()
        .chain(data.test_values)
        .copied()
        .fold(T::zero(), T::max);
    let mut out = Vec::with_capacity(widths.len());
    for &width in widths {
        if !(width > T::zero()) {
            return Err(Error::InvalidInput(format!("width must be positive, got {width}")));
        }
        let n_classes = ((max_value / width).ceil().as_f64() as usize).max(2);
        let cfg = BinConfig::new(width, n_classes)?;
        let train_labels: Vec<BinLabel> =
            data.train_values.iter().map(|&v| bin_of(v, &cfg)).collect();
        let model = trainer(data.train_features, &train_labels, &cfg)?;
        let predicted: Vec<T> = data
            .test_features
            .iter()
            .map(|fv| model.predict_value(&fv.values))
            .collect::<Result<_>>()?;
        let test_labels: Vec<BinLabel> =
            data.test_values.iter().map(|&v| bin_of(v, &cfg)).collect();
        let em = em(&test_labels, &predicted, width)?;
        out.push(WidthEmPoint { width, n_classes, em });
    }
    Ok(out)
}

/// Renders the study as `width,n_classes,em` CSV.
pub fn binwidth_curve_to_csv<T: Real>(points: &[WidthEmPoint<T>]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("width,n_classes,em\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.width, p.n_classes, p.em);
    }
    out
}
