//! Versioned JSON persistence for datasets and trained models.
//!
//! Every artifact is wrapped in an envelope carrying a format tag and a
//! format version, so a loader can reject files it does not understand
//! with a useful message instead of a serde type error. Serialization is
//! deterministic: struct fields are emitted in declaration order, so the
//! same value always produces the same bytes.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::features::Approach;
use crate::gbt::GbtModel;
use crate::labels::BinConfig;
use crate::market_data::SplitDataset;
use crate::mlp::MlpModel;
use crate::predictor::ValuePredictor;
use crate::scalar::Real;

/// On-disk format version shared by all artifact kinds. Bump on any
/// incompatible layout change; loaders reject newer versions.
pub const FORMAT_VERSION: u32 = 1;

const DATASET_FORMAT: &str = "optbin.dataset";
const MODEL_FORMAT: &str = "optbin.model";

#[derive(Serialize, Deserialize)]
struct Envelope<P> {
    format: String,
    version: u32,
    /// Free-form provenance marker (e.g. a config hash); never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    payload: P,
}

/// The learner family stored inside a [`TrainedBundle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind<T> {
    Mlp(MlpModel<T>),
    Gbt(GbtModel<T>),
    Ensemble(EnsembleModel<T>),
}

/// A trained model together with everything needed to apply it to fresh
/// records: the feature approach it expects and the bin layout its class
/// indices refer to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedBundle<T> {
    pub approach: Approach,
    pub bins: BinConfig<T>,
    pub model: ModelKind<T>,
}

impl<T: Real> TrainedBundle<T> {
    /// Feature-vector length the stored model expects.
    pub fn input_len(&self) -> usize {
        match &self.model {
            ModelKind::Mlp(m) => m.input_len(),
            ModelKind::Gbt(m) => m.input_len,
            ModelKind::Ensemble(m) => ValuePredictor::input_len(m),
        }
    }

    /// Number of classes the stored model scores.
    pub fn n_classes(&self) -> usize {
        match &self.model {
            ModelKind::Mlp(m) => m.n_classes(),
            ModelKind::Gbt(m) => m.n_classes,
            ModelKind::Ensemble(m) => m.ann.n_classes(),
        }
    }

    /// The stored model as a value predictor (ensemble members average;
    /// single learners return their bin number).
    pub fn predictor(&self) -> &dyn ValuePredictor<T> {
        match &self.model {
            ModelKind::Mlp(m) => m,
            ModelKind::Gbt(m) => m,
            ModelKind::Ensemble(m) => m,
        }
    }

    /// Internal-consistency check: the stored model is itself valid, the
    /// ensemble members agree with each other, and the model's shape
    /// agrees with the declared approach and bin layout.
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelKind::Mlp(m) => m.validate()?,
            ModelKind::Gbt(m) => m.validate()?,
            ModelKind::Ensemble(m) => {
                m.ann.validate()?;
                m.gbt.validate()?;
                if m.ann.input_len() != m.gbt.input_len {
                    return Err(Error::InvalidInput(format!(
                        "ensemble members disagree on input length: ann {}, gbt {}",
                        m.ann.input_len(),
                        m.gbt.input_len
                    )));
                }
                if m.ann.n_classes() != m.gbt.n_classes {
                    return Err(Error::InvalidInput(format!(
                        "ensemble members disagree on class count: ann {}, gbt {}",
                        m.ann.n_classes(),
                        m.gbt.n_classes
                    )));
                }
            }
        }
        if self.input_len() != self.approach.feature_len() {
            return Err(Error::InvalidInput(format!(
                "model expects {} features but the declared approach produces {}",
                self.input_len(),
                self.approach.feature_len()
            )));
        }
        if self.n_classes() != self.bins.n_classes {
            return Err(Error::InvalidInput(format!(
                "model scores {} classes but the bin layout has {}",
                self.n_classes(),
                self.bins.n_classes
            )));
        }
        Ok(())
    }
}

fn save_envelope<P: Serialize>(
    path: &Path,
    format: &str,
    tag: Option<&str>,
    payload: &P,
) -> Result<()> {
    let envelope = Envelope {
        format: format.to_owned(),
        version: FORMAT_VERSION,
        tag: tag.map(str::to_owned),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::serialization(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_envelope<P: DeserializeOwned>(path: &Path, format: &str) -> Result<P> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Two-stage parse: check the header before touching the payload, so a
    // file of the wrong kind is reported as such rather than as a type
    // mismatch deep inside its payload.
    let envelope: Envelope<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::serialization(path, e.to_string()))?;
    if envelope.format != format {
        return Err(Error::serialization(
            path,
            format!("expected format {format:?}, found {:?}", envelope.format),
        ));
    }
    if envelope.version > FORMAT_VERSION {
        return Err(Error::serialization(
            path,
            format!(
                "format version {} is newer than the supported {FORMAT_VERSION}",
                envelope.version
            ),
        ));
    }
    serde_json::from_value(envelope.payload)
        .map_err(|e| Error::serialization(path, e.to_string()))
}

/// Write a split dataset as a versioned JSON artifact.
pub fn save_dataset<T: Real + Serialize>(
    path: impl AsRef<Path>,
    dataset: &SplitDataset<T>,
) -> Result<()> {
    save_envelope(path.as_ref(), DATASET_FORMAT, None, dataset)
}

/// [`save_dataset`] with a provenance tag stored in the envelope.
pub fn save_dataset_tagged<T: Real + Serialize>(
    path: impl AsRef<Path>,
    dataset: &SplitDataset<T>,
    tag: &str,
) -> Result<()> {
    save_envelope(path.as_ref(), DATASET_FORMAT, Some(tag), dataset)
}

/// Read back a dataset written by [`save_dataset`].
pub fn load_dataset<T: Real + DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<SplitDataset<T>> {
    load_envelope(path.as_ref(), DATASET_FORMAT)
}

/// Write a trained bundle as a versioned JSON artifact. The bundle is
/// validated first so no inconsistent model ever reaches disk.
pub fn save_model<T: Real + Serialize>(
    path: impl AsRef<Path>,
    bundle: &TrainedBundle<T>,
) -> Result<()> {
    bundle.validate()?;
    save_envelope(path.as_ref(), MODEL_FORMAT, None, bundle)
}

/// [`save_model`] with a provenance tag stored in the envelope.
pub fn save_model_tagged<T: Real + Serialize>(
    path: impl AsRef<Path>,
    bundle: &TrainedBundle<T>,
    tag: &str,
) -> Result<()> {
    bundle.validate()?;
    save_envelope(path.as_ref(), MODEL_FORMAT, Some(tag), bundle)
}

/// Read back a bundle written by [`save_model`], re-validating it.
pub fn load_model<T: Real + DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<TrainedBundle<T>> {
    let bundle: TrainedBundle<T> = load_envelope(path.as_ref(), MODEL_FORMAT)?;
    bundle.validate()?;
    Ok(bundle)
}
