//! Metrics (NMSE in dB, accuracy), full-split evaluation, experiment
//! sweeps, and embedding export for external visualization.

pub mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{denormalize_values, CsiSample, DatasetSplit};
use crate::error::{Error, Result};
use crate::model::{flops_count, param_count, FlopsBreakdown, Mode, ModelConfig, RscnetModel};
use crate::numerics::{Scalar, Tensor};
use crate::train::{train, TrainConfig};

/// Normalized mean square error over a sample set, in dB:
/// `10 * log10(mean_i ||H_i - Hhat_i||^2 / ||H_i||^2)`.
///
/// A perfect reconstruction yields `-inf` (the documented sentinel).
/// Samples with zero signal norm are rejected.
pub fn nmse_db<T: Scalar>(h_set: &[Tensor<T>], hhat_set: &[Tensor<T>]) -> Result<f64> {
    if h_set.is_empty() || h_set.len() != hhat_set.len() {
        return Err(Error::Eval(format!(
            "nmse_db: got {} references and {} reconstructions",
            h_set.len(),
            hhat_set.len()
        )));
    }
    let mut mean_ratio = 0.0f64;
    for (i, (h, hh)) in h_set.iter().zip(hhat_set).enumerate() {
        if h.shape() != hh.shape() {
            return Err(Error::Eval(format!(
                "nmse_db: sample {i} shapes differ: {:?} vs {:?}",
                h.shape(),
                hh.shape()
            )));
        }
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (&a, &b) in h.values().iter().zip(hh.values()) {
            let (a, b) = (a.to_f64(), b.to_f64());
            num += (a - b) * (a - b);
            den += a * a;
        }
        if den == 0.0 {
            return Err(Error::Eval(format!(
                "nmse_db: sample {i} has zero signal norm"
            )));
        }
        mean_ratio += num / den;
    }
    mean_ratio /= h_set.len() as f64;
    Ok(10.0 * mean_ratio.log10())
}

/// Alternative estimator: ratio of summed energies rather than the mean of
/// per-sample ratios. Emitted alongside the canonical value.
pub fn nmse_db_ratio_of_sums<T: Scalar>(
    h_set: &[Tensor<T>],
    hhat_set: &[Tensor<T>],
) -> Result<f64> {
    if h_set.is_empty() || h_set.len() != hhat_set.len() {
        return Err(Error::Eval("nmse_db: mismatched sample sets".into()));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (h, hh) in h_set.iter().zip(hhat_set) {
        for (&a, &b) in h.values().iter().zip(hh.values()) {
            let (a, b) = (a.to_f64(), b.to_f64());
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Err(Error::Eval("nmse_db: zero total signal norm".into()));
    }
    Ok(10.0 * (num / den).log10())
}

/// Argmax prediction; ties break toward the lowest class id.
pub fn predict_class<T: Scalar>(logits: &Tensor<T>) -> usize {
    let values = logits.values();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax class matches the label.
pub fn accuracy<T: Scalar>(logits_set: &[Tensor<T>], labels: &[usize]) -> f64 {
    assert!(!logits_set.is_empty() && logits_set.len() == labels.len());
    let correct = logits_set
        .iter()
        .zip(labels)
        .filter(|(logits, &label)| predict_class(logits) == label)
        .count();
    correct as f64 / labels.len() as f64
}

/// Per-sample forward products of an evaluation pass.
pub struct EvalBatch<T: Scalar> {
    pub logits: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
    pub targets: Vec<Tensor<T>>,
    pub reconstructions: Vec<Tensor<T>>,
    pub raw_targets: Option<Vec<Tensor<T>>>,
    pub raw_reconstructions: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> EvalBatch<T> {
    /// Batched eval-mode forward over a sample list.
    pub fn run(
        model: &RscnetModel<T>,
        samples: &[CsiSample<T>],
        batch_size: usize,
    ) -> Result<Self> {
        let c = &model.config;
        let per = c.n_antennas * c.n_subcarriers * c.n_timesteps;
        let mut logits = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        let mut targets = Vec::with_capacity(samples.len());
        let mut reconstructions = Vec::with_capacity(samples.len());

        for chunk in samples.chunks(batch_size.max(1)) {
            let mut values = vec![T::ZERO; chunk.len() * per];
            for (row, s) in chunk.iter().enumerate() {
                values[row * per..(row + 1) * per].copy_from_slice(s.amplitude.values());
            }
            let x = Tensor::new(
                vec![chunk.len(), c.n_antennas, c.n_subcarriers, c.n_timesteps],
                values,
            )
            .map_err(Error::Numerics)?;
            let out = model.forward_batch(&x, Mode::Eval).map_err(Error::Numerics)?;
            let sample_shape = vec![c.n_antennas, c.n_subcarriers, c.n_timesteps];
            for (row, s) in chunk.iter().enumerate() {
                logits.push(
                    out.logits
                        .narrow(0, row, 1)
                        .and_then(|t| t.reshape(vec![c.n_classes]))
                        .map(|t| t.detach())
                        .map_err(Error::Numerics)?,
                );
                labels.push(s.label);
                targets.push(s.amplitude.clone());
                reconstructions.push(
                    out.reconstruction
                        .narrow(0, row, 1)
                        .and_then(|t| t.reshape(sample_shape.clone()))
                        .map(|t| t.detach())
                        .map_err(Error::Numerics)?,
                );
            }
        }

        let (raw_targets, raw_reconstructions) = match &model.norm {
            Some(stats) => {
                let nt = c.n_timesteps;
                let denorm = |set: &[Tensor<T>]| -> Result<Vec<Tensor<T>>> {
                    set.iter()
                        .map(|t| {
                            Tensor::new(
                                t.shape().to_vec(),
                                denormalize_values(t.values(), nt, stats),
                            )
                            .map_err(Error::Numerics)
                        })
                        .collect()
                };
                (Some(denorm(&targets)?), Some(denorm(&reconstructions)?))
            }
            None => (None, None),
        };

        Ok(EvalBatch {
            logits,
            labels,
            targets,
            reconstructions,
            raw_targets,
            raw_reconstructions,
        })
    }
}

/// Metrics over one evaluated split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub nmse_db: f64,
    pub nmse_db_raw: f64,
    pub nmse_db_ratio_of_sums: f64,
    /// `confusion[true_class][predicted_class]`
    pub confusion: Vec<Vec<usize>>,
    pub flops: FlopsBreakdown,
    pub config: ModelConfig,
    pub param_count: usize,
    pub n_samples: usize,
}

/// Evaluate a model on a sample list (eval mode, batched).
pub fn evaluate<T: Scalar>(
    model: &RscnetModel<T>,
    samples: &[CsiSample<T>],
    batch_size: usize,
) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::Eval("evaluate: empty sample set".into()));
    }
    let batch = EvalBatch::run(model, samples, batch_size)?;
    let c = model.config.n_classes;
    let mut confusion = vec![vec![0usize; c]; c];
    for (logits, &label) in batch.logits.iter().zip(&batch.labels) {
        confusion[label][predict_class(logits)] += 1;
    }
    let nmse_raw = match (&batch.raw_targets, &batch.raw_reconstructions) {
        (Some(rt), Some(rr)) => nmse_db(rt, rr)?,
        _ => f64::NEG_INFINITY,
    };
    Ok(EvalResult {
        accuracy: accuracy(&batch.logits, &batch.labels),
        nmse_db: nmse_db(&batch.targets, &batch.reconstructions)?,
        nmse_db_raw: nmse_raw,
        nmse_db_ratio_of_sums: nmse_db_ratio_of_sums(&batch.targets, &batch.reconstructions)?,
        confusion,
        flops: flops_count(&model.config),
        config: model.config.clone(),
        param_count: param_count(model),
        n_samples: samples.len(),
    })
}

/// Axis of an experiment sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    WindowFrames,
    CompressionRatio,
    ExpansionRate,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n_f" | "nf" | "window_frames" => Ok(SweepAxis::WindowFrames),
            "eta" | "compression_ratio" => Ok(SweepAxis::CompressionRatio),
            "rho" | "expansion_rate" => Ok(SweepAxis::ExpansionRate),
            other => Err(Error::Eval(format!(
                "unknown sweep axis '{other}' (expected nf, eta, or rho)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::WindowFrames => "window_frames",
            SweepAxis::CompressionRatio => "compression_ratio",
            SweepAxis::ExpansionRate => "expansion_rate",
        }
    }

    /// Apply one axis value to a resolved base config.
    fn apply(&self, base: &ModelConfig, value: f64) -> Result<ModelConfig> {
        let mut config = base.clone();
        match self {
            SweepAxis::WindowFrames | SweepAxis::ExpansionRate => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Eval(format!(
                        "{}: {value} is not a positive integer",
                        self.name()
                    )));
                }
                if *self == SweepAxis::WindowFrames {
                    config.window_frames = value as usize;
                } else {
                    config.expansion_rate = value as usize;
                }
            }
            SweepAxis::CompressionRatio => config.compression_ratio = value,
        }
        config.validate().map_err(Error::Model)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub result: EvalResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Values rejected by config validation, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepOutcome {
    pub const CSV_HEADER: &'static str = "axis,value,accuracy,nmse_db,nmse_db_raw,encoder_flops_per_window,recurrent_flops_per_window,decoder_flops_per_window,classifier_flops_per_sample,param_count";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let r = &row.result;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.axis,
                row.value,
                r.accuracy,
                r.nmse_db,
                r.nmse_db_raw,
                r.flops.encoder_per_window,
                r.flops.recurrent_per_window,
                r.flops.decoder_per_window,
                r.flops.classifier_per_sample,
                r.param_count,
            ));
        }
        out
    }
}

/// Train and evaluate one model per axis value with a shared seed. Derived
/// dims (LSTM width) are frozen from the base config before the axis is
/// varied. Invalid values are reported and skipped; the sweep continues.
pub fn run_sweep<T: Scalar>(
    axis: SweepAxis,
    values: &[f64],
    base_config: &ModelConfig,
    train_config: &TrainConfig,
    split: &DatasetSplit<T>,
    out_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    let base = base_config.resolve();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &value in values {
        let config = match axis.apply(&base, value) {
            Ok(c) => c,
            Err(e) => {
                skipped.push((value, e.to_string()));
                continue;
            }
        };
        let mut model = RscnetModel::<T>::new(&config, train_config.seed)?;
        train(&mut model, split, train_config, None)?;
        let result = evaluate(&model, &split.test, train_config.batch_size)?;
        rows.push(SweepRow { value, result });
    }
    let outcome = SweepOutcome {
        axis: axis.name().to_string(),
        rows,
        skipped,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        std::fs::write(dir.join("sweep.csv"), outcome.to_csv()).map_err(|e| Error::Io {
            path: dir.join("sweep.csv").display().to_string(),
            source: e,
        })?;
        let charts = dir.join("charts");
        std::fs::create_dir_all(&charts).map_err(|e| Error::Io {
            path: charts.display().to_string(),
            source: e,
        })?;
        let acc_points: Vec<(f64, f64)> =
            outcome.rows.iter().map(|r| (r.value, r.result.accuracy)).collect();
        let nmse_points: Vec<(f64, f64)> =
            outcome.rows.iter().map(|r| (r.value, r.result.nmse_db)).collect();
        std::fs::write(
            charts.join("accuracy.svg"),
            svg::line_chart("accuracy", axis.name(), "accuracy", &[("accuracy", &acc_points)]),
        )
        .and_then(|_| {
            std::fs::write(
                charts.join("nmse.svg"),
                svg::line_chart("nmse (dB)", axis.name(), "nmse_db", &[("nmse_db", &nmse_points)]),
            )
        })
        .map_err(|e| Error::Io {
            path: charts.display().to_string(),
            source: e,
        })?;
    }
    Ok(outcome)
}

pub const EMBEDDING_STAGES: [&str; 4] = ["raw", "compressed", "recurrent", "classifier"];

/// Export per-sample embeddings at the four pipeline stages as CSV files
/// (one per stage) under `out_dir`. Row format: stage, sample_id, label,
/// then the flattened values.
pub fn export_embeddings<T: Scalar>(
    model: &RscnetModel<T>,
    samples: &[CsiSample<T>],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut stage_rows: Vec<Vec<String>> = vec![Vec::new(); 4];
    for (id, sample) in samples.iter().enumerate() {
        let out = model
            .model_forward(&sample.amplitude, Mode::Eval)
            .map_err(Error::Numerics)?;
        let compressed: Vec<T> = out
            .compressed
            .iter()
            .flat_map(|t| t.values().to_vec())
            .collect();
        let hidden: Vec<T> = out.hidden.iter().flat_map(|t| t.values().to_vec()).collect();
        let stages: [(&str, &[T]); 4] = [
            ("raw", sample.amplitude.values()),
            ("compressed", &compressed),
            ("recurrent", &hidden),
            ("classifier", out.penultimate.values()),
        ];
        for (i, (stage, values)) in stages.iter().enumerate() {
            let mut row = format!("{stage},{id},{}", sample.label);
            for v in values.iter() {
                row.push_str(&format!(",{}", v.to_f64()));
            }
            stage_rows[i].push(row);
        }
    }
    for (i, stage) in EMBEDDING_STAGES.iter().enumerate() {
        let width = stage_rows[i]
            .first()
            .map(|r| r.split(',').count() - 3)
            .unwrap_or(0);
        let mut text = String::from("stage,sample_id,label");
        for k in 0..width {
            text.push_str(&format!(",v{k}"));
        }
        text.push('\n');
        for row in &stage_rows[i] {
            text.push_str(row);
            text.push('\n');
        }
        let path = out_dir.join(format!("{stage}.csv"));
        std::fs::write(&path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}
