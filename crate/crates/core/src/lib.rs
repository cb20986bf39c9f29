//! Binned option-price prediction.
//!
//! This crate turns raw option-chain and underlying CSV data into a
//! supervised-learning problem: the option close, scaled as `100 * C / K`,
//! is discretised into fixed-width bins, and classifiers (a multi-layer
//! perceptron and gradient-boosted trees, both implemented here) predict
//! the bin. The crate also carries the surrounding apparatus: feature
//! construction from 20-bar underlying windows, evaluation metrics on the
//! bin scale, a Black-Scholes benchmark, and a geometric-Brownian-motion
//! simulator used to stress the pipeline against data of known volatility.
//!
//! Everything numeric is generic over a scalar type implementing
//! [`scalar::Real`]; `f64` instantiations of the main types are exported
//! at the crate root as `*64` aliases.

// Validation throughout uses `!(x > 0)`-style negations deliberately:
// unlike `x <= 0`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod black_scholes;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod gbt;
pub mod labels;
pub mod market_data;
pub mod metrics;
pub mod mlp;
pub mod persist;
pub mod predictor;
pub mod scalar;
pub mod simulator;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the main pipeline types.
pub type BinConfig64 = labels::BinConfig<f64>;
pub type UnderlyingBar64 = market_data::UnderlyingBar<f64>;
pub type OptionQuote64 = market_data::OptionQuote<f64>;
pub type ContractRecord64 = market_data::ContractRecord<f64>;
pub type SplitDataset64 = market_data::SplitDataset<f64>;
pub type FeatureVector64 = features::FeatureVector<f64>;
pub type MlpModel64 = mlp::MlpModel<f64>;
pub type GbtModel64 = gbt::GbtModel<f64>;
pub type EnsembleModel64 = ensemble::EnsembleModel<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;
pub type RegressionDiagnostic64 = metrics::RegressionDiagnostic<f64>;
pub type BsInputs64 = black_scholes::BsInputs<f64>;
pub type GbmPath64 = simulator::GbmPath<f64>;
pub type EmvCurve64 = simulator::EmvCurve<f64>;
pub type TrainedBundle64 = persist::TrainedBundle<f64>;
