//! The simple averaging ensemble: the mean of a network prediction and a
//! boosted-tree prediction, which lands on integers or half-integers.
//! The evaluation metrics need no changes for half-integer values — an
//! error of exactly 2.5 bins simply counts as a miss.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gbt::GbtModel;
use crate::labels::BinLabel;
use crate::mlp::MlpModel;
use crate::predictor::{BinPredictor, ValuePredictor};
use crate::scalar::Real;

/// A half-integer prediction: `2 * value()` is always an integer.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EnsemblePrediction<T> {
    value: T,
}

impl<T: Real> EnsemblePrediction<T> {
    pub fn value(&self) -> T {
        self.value
    }

    /// Whether the two underlying predictions disagreed.
    pub fn is_half(&self) -> bool {
        self.value.fract() != T::zero()
    }
}

/// `(p_ann + p_gbt) / 2`, exact because bin numbers are small integers.
pub fn average_predict<T: Real>(
    p_ann: BinLabel,
    p_gbt: BinLabel,
) -> EnsemblePrediction<T> {
    let value = (p_ann.as_real::<T>() + p_gbt.as_real::<T>()) / T::of(2.0);
    EnsemblePrediction { value }
}

/// The paired models. Predicts the average of the two class predictions,
/// so its output is a value, not a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel<T> {
    pub ann: MlpModel<T>,
    pub gbt: GbtModel<T>,
}

impl<T: Real> EnsembleModel<T> {
    pub fn predict(&self, features: &[T]) -> Result<EnsemblePrediction<T>> {
        Ok(average_predict(
            self.ann.predict_bin(features)?,
            self.gbt.predict_bin(features)?,
        ))
    }
}

impl<T: Real> ValuePredictor<T> for EnsembleModel<T> {
    fn input_len(&self) -> usize {
        BinPredictor::input_len(&self.ann)
    }

    fn predict_value(&self, features: &[T]) -> Result<T> {
        Ok(self.predict(features)?.value)
    }
}
