//! Experiment configuration: one JSON document with flag overrides and a
//! provenance hash embedded in every artifact.
//!
//! Precedence is flag > config file > built-in default. The hash covers
//! the fully resolved configuration, so two artifacts carry the same hash
//! exactly when the same effective settings produced them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use optbin::features::Approach;
use optbin::gbt::GbtTrainConfig;
use optbin::labels::BinConfig;
use optbin::mlp::MlpTrainConfig;
use optbin::simulator::{default_sigma_grid, GbmConfig, SweepConfig, SynthConfig};

/// Which learner family a run trains or studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Ann,
    Gbt,
    Ensemble,
}

/// Multi-layer-perceptron hyperparameters (the root seed and the class
/// count are supplied by the pipeline, not configured here).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub val_fraction: f64,
    pub patience: usize,
}

impl Default for MlpSection {
    fn default() -> Self {
        let d = MlpTrainConfig::default();
        MlpSection {
            hidden: d.hidden,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            val_fraction: d.val_fraction,
            patience: d.patience,
        }
    }
}

/// Gradient-boosting hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSection {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for GbtSection {
    fn default() -> Self {
        let d = GbtTrainConfig::default();
        GbtSection { n_rounds: d.n_rounds, max_depth: d.max_depth, shrinkage: d.shrinkage }
    }
}

/// Simulated-path sweep: the volatility grid, averaging, and the
/// geometric-Brownian-motion / synthetic-chain settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sigma_grid: Vec<f64>,
    pub repetitions: usize,
    pub mu: f64,
    pub days: usize,
    pub steps_per_year: u32,
    pub s0: f64,
    pub rate: f64,
    pub ttms: Vec<i64>,
    pub start_date: NaiveDate,
}

impl Default for SweepSection {
    fn default() -> Self {
        let gbm = GbmConfig::default();
        let synth = SynthConfig::default();
        SweepSection {
            sigma_grid: default_sigma_grid(),
            repetitions: SweepConfig::default().repetitions,
            mu: gbm.mu,
            days: gbm.days,
            steps_per_year: gbm.steps_per_year,
            s0: gbm.s0,
            rate: synth.rate,
            ttms: synth.ttms,
            start_date: synth.start_date,
        }
    }
}

/// Bin layout for the scaled target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinsSection {
    pub width: f64,
    pub n_classes: usize,
}

impl Default for BinsSection {
    fn default() -> Self {
        BinsSection { width: 0.1, n_classes: 50 }
    }
}

/// The whole experiment: data locations, modeling choices, and
/// command-specific knobs, all overridable from the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Feature approach: 1, 2, or 3.
    pub approach: u8,
    pub learner: Learner,
    pub bins: BinsSection,
    pub train_fraction: f64,
    /// Quantile levels reported for the signed bin error.
    pub quantiles: Vec<f64>,
    /// Raw inputs for `ingest`.
    pub underlying: Option<PathBuf>,
    pub options: Option<PathBuf>,
    pub yields: Option<PathBuf>,
    /// Dataset artifacts consumed by `train` (pooled) and
    /// `binwidth-study` (exactly one).
    pub datasets: Vec<PathBuf>,
    /// Dataset artifact scored by `evaluate`.
    pub dataset: Option<PathBuf>,
    /// Model artifact consumed by `evaluate` and `sweep`.
    pub model: Option<PathBuf>,
    pub mlp: MlpSection,
    pub gbt: GbtSection,
    pub sweep: SweepSection,
    /// Bin widths tried by `binwidth-study`.
    pub widths: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            approach: 1,
            learner: Learner::Ann,
            bins: BinsSection::default(),
            train_fraction: 0.7,
            quantiles: vec![0.02, 0.25, 0.5, 0.75, 0.98],
            underlying: None,
            options: None,
            yields: None,
            datasets: Vec::new(),
            dataset: None,
            model: None,
            mlp: MlpSection::default(),
            gbt: GbtSection::default(),
            sweep: SweepSection::default(),
            widths: vec![0.05, 0.075, 0.1, 0.125, 0.15],
        }
    }
}

// Per-stage seed lanes, so the network initialisation and the simulator
// never draw from the same stream even under one root seed.
const STAGE_MLP: u64 = 1;
const STAGE_SWEEP: u64 = 2;

fn stage_seed(root: u64, stage: u64) -> u64 {
    root ^ (stage << 56)
}

impl ExperimentConfig {
    /// Defaults, or the given JSON file overlaid on them.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| optbin::Error::io(path, e))
            .context("reading config file")?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("config file {} is not valid", path.display()))?;
        Ok(config)
    }

    /// Hex SHA-256 of the resolved configuration; stamped into every
    /// artifact this run writes. The output directory is excluded: it
    /// decides where artifacts land, never what they contain, so the same
    /// experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn approach(&self) -> anyhow::Result<Approach> {
        match self.approach {
            1 => Ok(Approach::I),
            2 => Ok(Approach::II),
            3 => Ok(Approach::III),
            other => bail!("approach must be 1, 2, or 3, got {other}"),
        }
    }

    pub fn bin_config(&self) -> anyhow::Result<BinConfig<f64>> {
        Ok(BinConfig::new(self.bins.width, self.bins.n_classes)?)
    }

    pub fn mlp_train_config(&self, n_classes: usize) -> MlpTrainConfig {
        MlpTrainConfig {
            learning_rate: self.mlp.learning_rate,
            batch_size: self.mlp.batch_size,
            epochs: self.mlp.epochs,
            seed: stage_seed(self.seed, STAGE_MLP),
            beta1: self.mlp.beta1,
            beta2: self.mlp.beta2,
            epsilon: self.mlp.epsilon,
            val_fraction: self.mlp.val_fraction,
            patience: self.mlp.patience,
            hidden: self.mlp.hidden.clone(),
            n_classes,
        }
    }

    pub fn gbt_train_config(&self, n_classes: usize) -> GbtTrainConfig {
        GbtTrainConfig {
            n_rounds: self.gbt.n_rounds,
            max_depth: self.gbt.max_depth,
            shrinkage: self.gbt.shrinkage,
            n_classes,
        }
    }

    pub fn gbm_config(&self) -> GbmConfig {
        GbmConfig {
            mu: self.sweep.mu,
            // Placeholder; the sweep overrides sigma per grid point.
            sigma: 0.2,
            days: self.sweep.days,
            steps_per_year: self.sweep.steps_per_year,
            s0: self.sweep.s0,
            seed: stage_seed(self.seed, STAGE_SWEEP),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            rate: self.sweep.rate,
            ttms: self.sweep.ttms.clone(),
            start_date: self.sweep.start_date,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            sigma_grid: self.sweep.sigma_grid.clone(),
            repetitions: self.sweep.repetitions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_keys_fall_back_to_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"seed": 9, "bins": {"width": 0.2}}"#).unwrap();
        let config = ExperimentConfig::load(Some(&path)).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.bins.width, 0.2);
        assert_eq!(config.bins.n_classes, 50, "unset keys keep their defaults");
        assert_eq!(config.train_fraction, 0.7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"sede": 9}"#).unwrap();
        let err = ExperimentConfig::load(Some(&path)).unwrap_err();
        assert!(err.to_string().contains("not valid"), "got: {err:#}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash(), b.hash(), "equal configs share a hash");
        assert_eq!(a.hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.hash(), b.hash(), "any field change must move the hash");
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: PathBuf::from("elsewhere"), ..a.clone() };
        assert_eq!(a.hash(), b.hash(), "where artifacts land must not change provenance");
    }

    #[test]
    fn approach_numbers_map_to_the_three_variants() {
        let mut config = ExperimentConfig::default();
        let expect = [(1, Approach::I), (2, Approach::II), (3, Approach::III)];
        for (n, want) in expect {
            config.approach = n;
            assert_eq!(config.approach().unwrap(), want);
        }
        config.approach = 4;
        assert!(config.approach().is_err());
    }

    #[test]
    fn stage_seeds_diverge_from_the_root_and_each_other() {
        let config = ExperimentConfig { seed: 7, ..ExperimentConfig::default() };
        let mlp = config.mlp_train_config(50).seed;
        let gbm = config.gbm_config().seed;
        assert_ne!(mlp, gbm);
        assert_ne!(mlp, 7);
        assert_ne!(gbm, 7);
        assert_eq!(
            mlp,
            ExperimentConfig { seed: 7, ..ExperimentConfig::default() }.mlp_train_config(50).seed,
            "stage seeds are a pure function of the root seed"
        );
    }
}
