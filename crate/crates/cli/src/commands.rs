//! The five pipeline commands. Each takes a fully resolved
//! [`ExperimentConfig`], writes its artifacts under `config.out`, and
//! prints a one-line summary. Every artifact carries the config hash: as
//! a `config_hash` field in JSON files and as a leading `# config_hash:`
//! comment line in CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use optbin::ensemble::EnsembleModel;
use optbin::features::{featurize_all, Approach, FeatureVector};
use optbin::gbt;
use optbin::labels::{label_values, scaled_value, BinConfig, BinLabel, BinStats};
use optbin::market_data::{
    build_records, chronological_split, filter_records, parse_option_csv,
    parse_underlying_csv, parse_yield_csv, BuildDrops, ContractRecord, FilterDrops,
};
use optbin::metrics::{
    binwidth_curve_to_csv, cdf_to_csv, em_vs_binwidth, error_distribution, metrics_report,
    orthogonal_regression, BinwidthStudyData, MetricsReport, RegressionDiagnostic,
};
use optbin::mlp::{self, loss_curve_to_csv};
use optbin::persist::{
    load_dataset, load_model, save_dataset_tagged, save_model_tagged, ModelKind, TrainedBundle,
};
use optbin::predictor::ValuePredictor;
use optbin::simulator::emv_sweep;

use crate::config::{ExperimentConfig, Learner};

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("no {key} file given: pass --{key} or set \"{key}\" in the config"))
}

fn ensure_out_dir(config: &ExperimentConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&config.out)
        .map_err(|e| optbin::Error::io(&config.out, e))
        .context("creating output directory")?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("encoding artifact")?;
    text.push('\n');
    fs::write(path, &text).map_err(|e| optbin::Error::io(path, e))?;
    Ok(())
}

fn write_csv(path: &Path, config_hash: &str, body: &str) -> anyhow::Result<()> {
    let text = format!("# config_hash: {config_hash}\n{body}");
    fs::write(path, &text).map_err(|e| optbin::Error::io(path, e))?;
    Ok(())
}

/// Scaled targets `100 C / K` for a batch of records.
fn scaled_values(records: &[ContractRecord<f64>]) -> optbin::Result<Vec<f64>> {
    records
        .iter()
        .map(|r| scaled_value(r.quote.close, r.quote.strike))
        .collect()
}

/// Bin midpoint mapped back to a price, extended to the half-integer
/// predictions an ensemble produces: `K * (p - 1/2) * w / 100`.
fn predicted_mid_price(predicted: f64, strike: f64, bins: &BinConfig<f64>) -> f64 {
    strike * ((predicted - 0.5) * bins.width) / 100.0
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Serialize)]
struct IngestReport {
    config_hash: String,
    bars: usize,
    quotes: usize,
    yield_points: usize,
    build_drops: BuildDrops,
    records_built: usize,
    filter_drops: FilterDrops,
    records_dropped: usize,
    records_kept: usize,
    train_records: usize,
    test_records: usize,
}

pub fn ingest(config: &ExperimentConfig) -> anyhow::Result<()> {
    let hash = config.hash();
    let bars = parse_underlying_csv::<f64>(required(&config.underlying, "underlying")?)?;
    let quotes = parse_option_csv::<f64>(required(&config.options, "options")?)?;
    let yields = parse_yield_csv::<f64>(required(&config.yields, "yields")?)?;

    let built = build_records(&bars, &quotes, &yields)?;
    let filtered = filter_records(&built.records);
    let split = chronological_split(&filtered.records, config.train_fraction)?;

    ensure_out_dir(config)?;
    let dataset_path = config.out.join("dataset.json");
    save_dataset_tagged(&dataset_path, &split, &hash)?;
    let report = IngestReport {
        config_hash: hash,
        bars: bars.len(),
        quotes: quotes.len(),
        yield_points: yields.len(),
        build_drops: built.drops,
        records_built: built.records.len(),
        filter_drops: filtered.drops,
        records_dropped: filtered.dropped,
        records_kept: filtered.records.len(),
        train_records: split.train.len(),
        test_records: split.test.len(),
    };
    write_json(&config.out.join("ingest_report.json"), &report)?;

    println!(
        "ingest: kept {} of {} records (train {} / test {}) -> {}",
        report.records_kept,
        report.records_built,
        report.train_records,
        report.test_records,
        dataset_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Serialize)]
struct AnnSummary {
    epochs_run: usize,
    final_train_loss: f64,
    stopped_early: bool,
}

#[derive(Serialize)]
struct GbtSummary {
    rounds_run: usize,
    final_train_loss: f64,
}

#[derive(Serialize)]
struct TrainReport {
    config_hash: String,
    learner: Learner,
    approach: u8,
    pooled_files: usize,
    train_records: usize,
    label_stats: BinStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    ann: Option<AnnSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gbt: Option<GbtSummary>,
}

fn gbt_losses_to_csv(losses: &[f64]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("round,train_loss\n");
    for (i, loss) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, loss);
    }
    out
}

fn train_ann(
    config: &ExperimentConfig,
    hash: &str,
    xs: &[Vec<f64>],
    labels: &[BinLabel],
    n_classes: usize,
) -> anyhow::Result<(mlp::MlpModel<f64>, AnnSummary)> {
    let out = mlp::train(xs, labels, &config.mlp_train_config(n_classes))?;
    write_csv(
        &config.out.join("ann_loss_curve.csv"),
        hash,
        &loss_curve_to_csv(&out.losses),
    )?;
    let summary = AnnSummary {
        epochs_run: out.losses.len(),
        final_train_loss: out.losses.last().map(|l| l.train_loss).unwrap_or(f64::NAN),
        stopped_early: out.stopped_early,
    };
    Ok((out.model, summary))
}

fn train_gbt(
    config: &ExperimentConfig,
    hash: &str,
    xs: &[Vec<f64>],
    labels: &[BinLabel],
    n_classes: usize,
) -> anyhow::Result<(gbt::GbtModel<f64>, GbtSummary)> {
    let out = gbt::boost(xs, labels, &config.gbt_train_config(n_classes))?;
    write_csv(
        &config.out.join("gbt_loss_curve.csv"),
        hash,
        &gbt_losses_to_csv(&out.losses),
    )?;
    let summary = GbtSummary {
        rounds_run: out.losses.len(),
        final_train_loss: out.losses.last().copied().unwrap_or(f64::NAN),
    };
    Ok((out.model, summary))
}

pub fn train(config: &ExperimentConfig) -> anyhow::Result<()> {
    let hash = config.hash();
    let approach = config.approach()?;
    let bins = config.bin_config()?;
    if config.datasets.is_empty() {
        bail!("no dataset files given: pass --data or set \"datasets\" in the config");
    }

    let mut records: Vec<ContractRecord<f64>> = Vec::new();
    for path in &config.datasets {
        records.extend(load_dataset::<f64>(path)?.train);
    }
    if records.is_empty() {
        bail!("the pooled training split is empty");
    }

    let features = featurize_all(&records, approach)?;
    let values = scaled_values(&records)?;
    let (labels, label_stats) = label_values(&values, &bins);
    let xs: Vec<Vec<f64>> = features.into_iter().map(|f| f.values).collect();

    ensure_out_dir(config)?;
    let mut ann_summary = None;
    let mut gbt_summary = None;
    let model = match config.learner {
        Learner::Ann => {
            let (model, summary) = train_ann(config, &hash, &xs, &labels, bins.n_classes)?;
            ann_summary = Some(summary);
            ModelKind::Mlp(model)
        }
        Learner::Gbt => {
            let (model, summary) = train_gbt(config, &hash, &xs, &labels, bins.n_classes)?;
            gbt_summary = Some(summary);
            ModelKind::Gbt(model)
        }
        Learner::Ensemble => {
            let (ann, summary_a) = train_ann(config, &hash, &xs, &labels, bins.n_classes)?;
            let (gbt, summary_g) = train_gbt(config, &hash, &xs, &labels, bins.n_classes)?;
            ann_summary = Some(summary_a);
            gbt_summary = Some(summary_g);
            ModelKind::Ensemble(EnsembleModel { ann, gbt })
        }
    };

    let bundle = TrainedBundle { approach, bins, model };
    let model_path = config.out.join("model.json");
    save_model_tagged(&model_path, &bundle, &hash)?;
    let report = TrainReport {
        config_hash: hash,
        learner: config.learner,
        approach: config.approach,
        pooled_files: config.datasets.len(),
        train_records: records.len(),
        label_stats,
        ann: ann_summary,
        gbt: gbt_summary,
    };
    write_json(&config.out.join("train_report.json"), &report)?;

    println!(
        "train: fitted {:?} on {} records from {} file(s) -> {}",
        config.learner,
        report.train_records,
        report.pooled_files,
        model_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Serialize)]
struct EvaluateReport {
    config_hash: String,
    test_records: usize,
    metrics: MetricsReport<f64>,
    /// Orthogonal regression of actual close on predicted mid price;
    /// absent when the scatter is degenerate (e.g. constant predictions).
    regression: Option<RegressionDiagnostic<f64>>,
}

pub fn evaluate(config: &ExperimentConfig) -> anyhow::Result<()> {
    let hash = config.hash();
    let bundle = load_model::<f64>(required(&config.model, "model")?)?;
    let dataset = load_dataset::<f64>(required(&config.dataset, "dataset")?)?;
    if dataset.test.is_empty() {
        bail!("the dataset's test split is empty");
    }

    let features = featurize_all(&dataset.test, bundle.approach)?;
    let values = scaled_values(&dataset.test)?;
    let (actual, _) = label_values(&values, &bundle.bins);
    let predictor = bundle.predictor();
    let predicted: Vec<f64> = features
        .iter()
        .map(|f| predictor.predict_value(&f.values))
        .collect::<optbin::Result<_>>()?;

    let metrics = metrics_report(&actual, &predicted, &bundle.bins, &config.quantiles)?;
    let distribution = error_distribution(&actual, &predicted, &config.quantiles)?;

    let mid_prices: Vec<f64> = predicted
        .iter()
        .zip(&dataset.test)
        .map(|(&p, r)| predicted_mid_price(p, r.quote.strike, &bundle.bins))
        .collect();
    let closes: Vec<f64> = dataset.test.iter().map(|r| r.quote.close).collect();
    let regression = match orthogonal_regression(&mid_prices, &closes) {
        Ok(diagnostic) => Some(diagnostic),
        Err(optbin::Error::Degenerate(_)) => None,
        Err(err) => return Err(err.into()),
    };

    ensure_out_dir(config)?;
    let report = EvaluateReport {
        config_hash: hash.clone(),
        test_records: dataset.test.len(),
        metrics,
        regression,
    };
    let metrics_path = config.out.join("metrics.json");
    write_json(&metrics_path, &report)?;
    write_csv(&config.out.join("error_cdf.csv"), &hash, &cdf_to_csv(&distribution))?;

    let mut scatter = String::from("predicted_mid,actual_close\n");
    {
        use std::fmt::Write as _;
        for (mid, close) in mid_prices.iter().zip(&closes) {
            let _ = writeln!(scatter, "{mid},{close}");
        }
    }
    write_csv(&config.out.join("scatter.csv"), &hash, &scatter)?;

    println!(
        "evaluate: {} test records, accuracy {:.4}, em {:.4}, rho {:.4} -> {}",
        report.test_records,
        report.metrics.accuracy,
        report.metrics.em,
        report.metrics.rho,
        metrics_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Serialize)]
struct SweepSummary {
    config_hash: String,
    /// Grid argmin of the error metric.
    emv: f64,
    min_em: f64,
    n_points: usize,
}

pub fn sweep(config: &ExperimentConfig) -> anyhow::Result<()> {
    let hash = config.hash();
    let bundle = load_model::<f64>(required(&config.model, "model")?)?;
    if bundle.approach != Approach::I {
        bail!(
            "sweep simulates approach-1 features; the model was trained with approach {:?}",
            bundle.approach
        );
    }

    let curve = emv_sweep(
        bundle.predictor(),
        &config.gbm_config(),
        &config.synth_config(),
        &config.sweep_config(),
        &bundle.bins,
    )?;

    ensure_out_dir(config)?;
    let curve_path = config.out.join("emv_curve.csv");
    write_csv(&curve_path, &hash, &curve.to_csv())?;
    let min_em = curve
        .points
        .iter()
        .find(|p| p.sigma == curve.emv)
        .map(|p| p.em)
        .unwrap_or(f64::NAN);
    let summary = SweepSummary {
        config_hash: hash,
        emv: curve.emv,
        min_em,
        n_points: curve.points.len(),
    };
    write_json(&config.out.join("sweep_summary.json"), &summary)?;

    println!(
        "sweep: {} grid points, error minimised at sigma {} -> {}",
        summary.n_points,
        summary.emv,
        curve_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// binwidth-study

pub fn binwidth_study(config: &ExperimentConfig) -> anyhow::Result<()> {
    let hash = config.hash();
    let approach = config.approach()?;
    if config.datasets.len() != 1 {
        bail!(
            "binwidth-study takes exactly one dataset file, got {}",
            config.datasets.len()
        );
    }
    let dataset = load_dataset::<f64>(&config.datasets[0])?;
    if dataset.train.is_empty() || dataset.test.is_empty() {
        bail!("binwidth-study needs non-empty train and test splits");
    }

    let train_features = featurize_all(&dataset.train, approach)?;
    let test_features = featurize_all(&dataset.test, approach)?;
    let train_values = scaled_values(&dataset.train)?;
    let test_values = scaled_values(&dataset.test)?;
    let data = BinwidthStudyData {
        train_features: &train_features,
        train_values: &train_values,
        test_features: &test_features,
        test_values: &test_values,
    };

    let learner = config.learner;
    let mut trainer = |features: &[FeatureVector<f64>],
                       labels: &[BinLabel],
                       bins: &BinConfig<f64>|
     -> optbin::Result<Box<dyn ValuePredictor<f64>>> {
        let xs: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
        match learner {
            Learner::Ann => {
                let out = mlp::train(&xs, labels, &config.mlp_train_config(bins.n_classes))?;
                Ok(Box::new(out.model))
            }
            Learner::Gbt => {
                let out = gbt::boost(&xs, labels, &config.gbt_train_config(bins.n_classes))?;
                Ok(Box::new(out.model))
            }
            Learner::Ensemble => {
                let ann = mlp::train(&xs, labels, &config.mlp_train_config(bins.n_classes))?.model;
                let gbt = gbt::boost(&xs, labels, &config.gbt_train_config(bins.n_classes))?.model;
                Ok(Box::new(EnsembleModel { ann, gbt }))
            }
        }
    };
    let points = em_vs_binwidth(&data, &config.widths, &mut trainer)?;

    ensure_out_dir(config)?;
    let curve_path = config.out.join("em_vs_width.csv");
    write_csv(&curve_path, &hash, &binwidth_curve_to_csv(&points))?;

    println!(
        "binwidth-study: {} widths on {} train / {} test records -> {}",
        points.len(),
        dataset.train.len(),
        dataset.test.len(),
        curve_path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gbt_loss_csv_has_one_row_per_round() {
        let csv = gbt_losses_to_csv(&[0.5, 0.25]);
        assert_eq!(csv, "round,train_loss\n1,0.5\n2,0.25\n");
    }

    #[test]
    fn integer_predictions_reproduce_the_library_mid_price() {
        let bins = BinConfig::new(0.1, 50).unwrap();
        for n in [1u32, 7, 50] {
            let via_label =
                optbin::labels::mid_price(BinLabel::of(n), 8300.0, &bins).unwrap();
            let via_value = predicted_mid_price(n as f64, 8300.0, &bins);
            assert_eq!(via_value, via_label, "bin {n}");
        }
    }

    #[test]
    fn half_integer_predictions_land_between_neighboring_mids() {
        // Dyadic width, so the midpoint identity is exact in binary.
        let bins = BinConfig::new(0.25, 50).unwrap();
        let lo = predicted_mid_price(3.0, 100.0, &bins);
        let mid = predicted_mid_price(3.5, 100.0, &bins);
        let hi = predicted_mid_price(4.0, 100.0, &bins);
        assert!(lo < mid && mid < hi);
        assert_eq!(mid, (lo + hi) / 2.0);
    }

    #[test]
    fn csv_artifacts_lead_with_the_config_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_csv(&path, "abc123", "sigma,em\n0.1,0.5\n").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# config_hash: abc123\nsigma,em\n0.1,0.5\n");
    }
}
