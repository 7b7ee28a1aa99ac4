//! Prediction-latency measurement.
//!
//! Times the in-memory prediction path — averaging the buffered history
//! rows, encoding the instance, and scoring — for history lengths 1..=5
//! per model kind, with everything preloaded and the store excluded.
//! Each measurement runs on one thread, repeats 5 times, and reports
//! the mean of means plus averaged p50/p99.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::features::{
    aggregate_history, build_dataset, extract_examples, FeatureSchema, FeatureStream,
    HistoryRow, RawFeatures, Sampling,
};
use crate::models::{train, TrainedModel};
use crate::synthgen::generate_log;

use super::{derive_seed, ExperimentError, ExperimentSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub experiment: ExperimentSpec,
    pub iterations: usize,
    pub repetitions: usize,
    pub history_lengths: Vec<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            experiment: ExperimentSpec::default(),
            iterations: 10_000,
            repetitions: 5,
            history_lengths: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyRow {
    pub model: String,
    pub history_len: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
}

/// One timed prediction: history means, encode, score.
fn predict_once(
    rows: &[HistoryRow],
    template: &RawFeatures,
    current_date: i64,
    schema: &FeatureSchema,
    buf: &mut Vec<f64>,
    model: &TrainedModel,
) -> f64 {
    let mut raw = template.clone();
    let (means, len) = aggregate_history(rows.iter(), current_date);
    raw.hist = means;
    raw.history_len = len;
    schema.encode_into(&raw, buf);
    model.score_values(buf)
}

/// Trains each model kind on the spec's synthetic log, then measures
/// per-prediction latency at each history length.
pub fn bench_latency(spec: &BenchSpec) -> Result<Vec<LatencyRow>, ExperimentError> {
    if spec.iterations == 0 || spec.repetitions == 0 {
        return Err(ExperimentError::InvalidSpec("iterations and repetitions must be >= 1".into()));
    }
    let exp = &spec.experiment;
    let generated = generate_log(&exp.generator)?;
    let examples =
        extract_examples(&generated.log, &generated.labels, exp.feature_params)?;
    let schema = FeatureSchema::for_selector(&exp.selector)?;

    let train_ds = build_dataset(
        &examples.examples,
        &exp.selector,
        Sampling::Balanced { seed: derive_seed(exp.seed, 1) },
    )?;
    let models: Vec<TrainedModel> = exp
        .models
        .iter()
        .map(|&kind| train(kind, &train_ds, &exp.model_config, derive_seed(exp.seed, 4)))
        .collect::<Result<_, _>>()?;

    // Harvest real history rows: replay the stream and keep the longest
    // buffer of the busiest caller seen.
    let max_len = spec.history_lengths.iter().copied().max().unwrap_or(1);
    let mut stream = FeatureStream::new(generated.log.meta(), exp.feature_params);
    let mut harvested: Vec<HistoryRow> = Vec::new();
    let mut template: Option<(RawFeatures, i64)> = None;
    for record in generated.log.records() {
        if stream.qualifies(record) {
            let rows: Vec<HistoryRow> = stream.history(record.caller()).cloned().collect();
            if rows.len() >= max_len && rows.len() > harvested.len() {
                let raw = stream.extract(record)?;
                harvested = rows;
                template = Some((raw, record.call_date));
                if harvested.len() >= max_len {
                    break;
                }
            }
        }
        stream.apply(record)?;
    }
    let (template, current_date) = template
        .ok_or(ExperimentError::EmptySplit("caller with enough history for the benchmark"))?;

    let mut rows_out = Vec::new();
    for (kind, model) in exp.models.iter().zip(&models) {
        for &hist_len in &spec.history_lengths {
            let hist = &harvested[..hist_len.min(harvested.len())];
            let mut means = Vec::with_capacity(spec.repetitions);
            let mut p50s = Vec::with_capacity(spec.repetitions);
            let mut p99s = Vec::with_capacity(spec.repetitions);
            let mut buf = Vec::new();
            for _ in 0..spec.repetitions {
                let mut samples_us: Vec<f64> = Vec::with_capacity(spec.iterations);
                for _ in 0..spec.iterations {
                    let started = Instant::now();
                    let score = predict_once(
                        black_box(hist),
                        black_box(&template),
                        current_date,
                        &schema,
                        &mut buf,
                        model,
                    );
                    let elapsed = started.elapsed();
                    black_box(score);
                    samples_us.push(elapsed.as_secs_f64() * 1e6);
                }
                samples_us.sort_by(|a, b| a.total_cmp(b));
                let mean = samples_us.iter().sum::<f64>() / samples_us.len() as f64;
                means.push(mean);
                p50s.push(samples_us[samples_us.len() / 2]);
                let p99_idx =
                    ((samples_us.len() as f64 * 0.99) as usize).min(samples_us.len() - 1);
                p99s.push(samples_us[p99_idx]);
            }
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            rows_out.push(LatencyRow {
                model: kind.name().to_string(),
                history_len: hist_len,
                mean_us: avg(&means),
                p50_us: avg(&p50s),
                p99_us: avg(&p99s),
            });
        }
    }
    Ok(rows_out)
}

/// bench.json plus bench.csv.
pub fn write_bench_outputs(dir: &std::path::Path, rows: &[LatencyRow]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::File::create(dir.join("bench.json"))?;
    serde_json::to_writer_pretty(&mut file, &rows)?;
    std::io::Write::write_all(&mut file, b"\n")?;
    let mut csv = String::from("model,history_len,mean_us,p50_us,p99_us\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model, row.history_len, row.mean_us, row.p50_us, row.p99_us
        ));
    }
    std::fs::write(dir.join("bench.csv"), csv)
}
