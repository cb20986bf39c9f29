//! Prediction interfaces shared by the learners and the evaluation code.
//!
//! Classifiers ([`crate::mlp::MlpModel`], [`crate::gbt::GbtModel`]) emit a
//! [`BinLabel`]; the averaging ensemble emits half-integer values. Metrics
//! only need the numeric prediction, so they consume the wider
//! [`ValuePredictor`] trait; each classifier also implements it by
//! casting its label.

use crate::error::Result;
use crate::labels::BinLabel;
use crate::scalar::Real;

/// A model that names a bin for a feature vector.
pub trait BinPredictor<T: Real> {
    /// Length of feature vector this model expects.
    fn input_len(&self) -> usize;

    /// Predicts the 1-based bin for one feature vector.
    fn predict_bin(&self, features: &[T]) -> Result<BinLabel>;
}

/// A model that emits a numeric bin-scale prediction (integer for plain
/// classifiers, half-integer for the ensemble).
pub trait ValuePredictor<T: Real> {
    fn input_len(&self) -> usize;

    /// Predicts a value on the bin-number scale for one feature vector.
    fn predict_value(&self, features: &[T]) -> Result<T>;
}

/// Implements [`ValuePredictor`] for a [`BinPredictor`] by casting the
/// predicted label to its bin number.
macro_rules! value_via_bin {
    ($model:ident) => {
        impl<T: crate::scalar::Real> crate::predictor::ValuePredictor<T> for $model<T> {
            fn input_len(&self) -> usize {
                crate::predictor::BinPredictor::input_len(self)
            }

            fn predict_value(&self, features: &[T]) -> crate::error::Result<T> {
                Ok(crate::predictor::BinPredictor::predict_bin(self, features)?.as_real())
            }
        }
    };
}
pub(crate) use value_via_bin;

/// Runs a value predictor over a batch of feature vectors.
pub fn predict_values<T: Real>(
    model: &dyn ValuePredictor<T>,
    features: &[crate::features::FeatureVector<T>],
) -> Result<Vec<T>> {
    features.iter().map(|fv| model.predict_value(&fv.values)).collect()
}

/// Runs a bin predictor over a batch of feature vectors.
pub fn predict_bins<T: Real>(
    model: &dyn BinPredictor<T>,
    features: &[crate::features::FeatureVector<T>],
) -> Result<Vec<BinLabel>> {
    features.iter().map(|fv| model.predict_bin(&fv.values)).collect()
}
