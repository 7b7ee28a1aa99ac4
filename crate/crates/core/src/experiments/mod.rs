//! Seed-deterministic experiment orchestration.
//!
//! One experiment: generate (or take) a labeled log, stream-extract
//! every instance once, split by period and caller region, then for
//! each training resample build a number-balanced training set, fit
//! every requested model, calibrate tau on held-out benign records,
//! and score AUC, AFP, MR, and reduction against the blacklist
//! baseline. Reports average the resamples; identical specs and seeds
//! reproduce identical artifacts byte for byte.

mod bench;
mod output;

pub use bench::{bench_latency, write_bench_outputs, BenchSpec, LatencyRow};
pub use output::{
    write_ablation_outputs, write_experiment_outputs, write_importance_outputs, AblationOutput,
    AblationRow, BaselineRow, ExperimentOutput, ImportanceOutput, ModelAuc,
};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call_log::{validate_log, CallLog, LabelTable, LogError, PhoneId};
use crate::features::{
    build_dataset, extract_examples, Dataset, Example, ExampleSet, FeatureError, FeatureParams,
    FeatureSchema, FeatureSelector, Sampling,
};
use crate::metrics::{
    afp, mr_at, reduction_rate, roc_auc, tau_of_p, AfpEntry, EvalConfig, EvalReport, MetricError,
};
use crate::models::{
    feature_usage_histogram, train, FeatureUsage, ModelConfig, ModelError, ModelKind,
    TrainedModel,
};
use crate::synthgen::{generate_log, GenError, GeneratorConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("log fails validation with {violations} violations")]
    InvalidLog { violations: usize },
    #[error("train and test regions differ but share {shared} caller numbers")]
    RegionOverlap { shared: usize },
    #[error("no {0} available in the configured split")]
    EmptySplit(&'static str),
}

/// Day range `[start, end)` relative to the log start.
pub type DayRange = (u32, u32);

/// Everything one experiment run depends on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub generator: GeneratorConfig,
    pub train_days: DayRange,
    pub test_days: DayRange,
    /// Caller-province filters; `None` keeps every region.
    pub train_region: Option<Vec<String>>,
    pub test_region: Option<Vec<String>>,
    pub models: Vec<ModelKind>,
    pub model_config: ModelConfig,
    pub selector: FeatureSelector,
    pub eval: EvalConfig,
    pub feature_params: FeatureParams,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            generator: GeneratorConfig::default(),
            train_days: (0, 20),
            test_days: (20, 30),
            train_region: None,
            test_region: None,
            models: ModelKind::ALL.to_vec(),
            model_config: ModelConfig::default(),
            selector: FeatureSelector::All,
            eval: EvalConfig::default(),
            feature_params: FeatureParams::default(),
            resamples: 5,
            seed: 0,
        }
    }
}

fn validate_spec(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    if spec.resamples == 0 {
        return Err(ExperimentError::InvalidSpec("resamples must be >= 1".into()));
    }
    if spec.models.is_empty() {
        return Err(ExperimentError::InvalidSpec("at least one model kind".into()));
    }
    for (name, (a, b)) in [("train_days", spec.train_days), ("test_days", spec.test_days)] {
        if a >= b {
            return Err(ExperimentError::InvalidSpec(format!("{name}: empty day range")));
        }
    }
    if !(0.0..1.0).contains(&spec.eval.calib_fraction) {
        return Err(ExperimentError::InvalidSpec("calib_fraction must be in [0, 1)".into()));
    }
    Ok(())
}

pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 round over the salted seed.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_TRAIN: u64 = 1;
const SALT_TEST: u64 = 2;
const SALT_CALIB: u64 = 3;
const SALT_MODEL: u64 = 4;

/// Extracted instances split into the experiment's pools. Indices point
/// into `examples.examples`.
pub struct PreparedData {
    pub examples: ExampleSet,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub benign_calib_idx: Vec<usize>,
    pub benign_eval_idx: Vec<usize>,
    /// Malicious test numbers with their example indices in call order.
    pub malicious_test: Vec<(PhoneId, Vec<usize>)>,
}

/// Streams the log once and materializes the experiment splits.
pub fn prepare(
    log: &CallLog,
    labels: &LabelTable,
    spec: &ExperimentSpec,
) -> Result<PreparedData, ExperimentError> {
    validate_spec(spec)?;
    let violations = validate_log(log);
    if !violations.is_empty() {
        return Err(ExperimentError::InvalidLog { violations: violations.len() });
    }
    let examples = extract_examples(log, labels, spec.feature_params)?;
    let start_epoch = log.meta().start_epoch;
    let day_of = |ex: &Example| -> i64 {
        (ex.call_date - start_epoch).div_euclid(crate::timeutil::SECS_PER_DAY)
    };
    let in_range = |ex: &Example, range: DayRange| {
        let d = day_of(ex);
        d >= range.0 as i64 && d < (range.1 as i64)
    };
    let in_region = |ex: &Example, region: &Option<Vec<String>>| match region {
        None => true,
        Some(codes) => codes.iter().any(|c| c == ex.caller_province.as_str()),
    };

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (i, ex) in examples.examples.iter().enumerate() {
        if in_range(ex, spec.train_days) && in_region(ex, &spec.train_region) {
            train_idx.push(i);
        }
        if in_range(ex, spec.test_days) && in_region(ex, &spec.test_region) {
            test_idx.push(i);
        }
    }
    if train_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("training examples"));
    }
    if test_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("test examples"));
    }

    // Differing regions must not share caller numbers.
    if spec.train_region != spec.test_region {
        let train_callers: HashSet<PhoneId> =
            train_idx.iter().map(|&i| examples.examples[i].caller).collect();
        let shared = test_idx
            .iter()
            .filter(|&&i| train_callers.contains(&examples.examples[i].caller))
            .count();
        if shared > 0 {
            return Err(ExperimentError::RegionOverlap { shared });
        }
    }

    // Benign test records split into calibration and evaluation.
    let mut calib_rng = rng(derive_seed(spec.seed, SALT_CALIB));
    let mut benign_calib_idx = Vec::new();
    let mut benign_eval_idx = Vec::new();
    for &i in &test_idx {
        if examples.examples[i].label {
            continue;
        }
        if rand::Rng::gen_bool(&mut calib_rng, spec.eval.calib_fraction) {
            benign_calib_idx.push(i);
        } else {
            benign_eval_idx.push(i);
        }
    }
    if benign_calib_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("benign calibration records"));
    }

    // Malicious test numbers in first-appearance order.
    let mut malicious_test: Vec<(PhoneId, Vec<usize>)> = Vec::new();
    let mut by_caller: HashMap<PhoneId, usize> = HashMap::new();
    for &i in &test_idx {
        let ex = &examples.examples[i];
        if !ex.label {
            continue;
        }
        match by_caller.get(&ex.caller) {
            Some(&slot) => malicious_test[slot].1.push(i),
            None => {
                by_caller.insert(ex.caller, malicious_test.len());
                malicious_test.push((ex.caller, vec![i]));
            }
        }
    }
    if malicious_test.is_empty() {
        return Err(ExperimentError::EmptySplit("malicious test numbers"));
    }

    Ok(PreparedData {
        examples,
        train_idx,
        test_idx,
        benign_calib_idx,
        benign_eval_idx,
        malicious_test,
    })
}

pub(crate) fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn subset(examples: &ExampleSet, idx: &[usize]) -> Vec<Example> {
    idx.iter().map(|&i| examples.examples[i].clone()).collect()
}

/// Encodes the examples at `idx` under `schema`.
fn encode_rows(examples: &ExampleSet, idx: &[usize], schema: &FeatureSchema) -> Vec<Vec<f64>> {
    let mut buf = Vec::new();
    idx.iter()
        .map(|&i| {
            schema.encode_into(&examples.examples[i].raw, &mut buf);
            buf.clone()
        })
        .collect()
}

struct ResampleEval {
    auc: f64,
    roc: crate::metrics::RocCurve,
    tau: f64,
    afp_per_m: Vec<f64>,
    mr: Vec<f64>,
    benign_pass_rate: f64,
    train_rows: usize,
    train_positives: usize,
}

/// Full evaluation of one experiment spec on a generated log.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    let generated = generate_log(&spec.generator)?;
    run_experiment_on(&generated.log, &generated.labels, spec)
}

/// Full evaluation on a caller-provided log and label table.
pub fn run_experiment_on(
    log: &CallLog,
    labels: &LabelTable,
    spec: &ExperimentSpec,
) -> Result<ExperimentOutput, ExperimentError> {
    let prepared = prepare(log, labels, spec)?;
    let schema = FeatureSchema::for_selector(&spec.selector)?;
    let fingerprint = schema.fingerprint();

    // Selector-fixed encodings, shared across models and resamples.
    let calib_rows = encode_rows(&prepared.examples, &prepared.benign_calib_idx, &schema);
    let eval_rows = encode_rows(&prepared.examples, &prepared.benign_eval_idx, &schema);
    let malicious_rows: Vec<Vec<Vec<f64>>> = prepared
        .malicious_test
        .iter()
        .map(|(_, idx)| encode_rows(&prepared.examples, idx, &schema))
        .collect();

    let train_pool = subset(&prepared.examples, &prepared.train_idx);
    let test_pool = subset(&prepared.examples, &prepared.test_idx);

    let mut per_model: Vec<Vec<ResampleEval>> =
        (0..spec.models.len()).map(|_| Vec::new()).collect();
    let mut models_r0: Vec<TrainedModel> = Vec::new();
    for r in 0..spec.resamples {
        let train_ds = build_dataset(
            &train_pool,
            &spec.selector,
            Sampling::Balanced { seed: derive_seed(spec.seed, SALT_TRAIN + 10 * r as u64) },
        )?;
        let test_ds = build_dataset(
            &test_pool,
            &spec.selector,
            Sampling::Balanced { seed: derive_seed(spec.seed, SALT_TEST + 10 * r as u64) },
        )?;
        for (slot, &kind) in spec.models.iter().enumerate() {
            let model = train(
                kind,
                &train_ds,
                &spec.model_config,
                derive_seed(spec.seed, SALT_MODEL + 10 * r as u64),
            )?;
            if r == 0 {
                models_r0.push(model.clone());
            }
            per_model[slot].push(evaluate_resample(
                &model,
                &train_ds,
                &test_ds,
                fingerprint,
                &calib_rows,
                &eval_rows,
                &malicious_rows,
                &spec.eval,
            )?);
        }
    }

    let reports = spec
        .models
        .iter()
        .zip(per_model)
        .map(|(&kind, runs)| average_runs(kind, runs, spec, &prepared))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ExperimentOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: spec.seed,
        spec: spec.clone(),
        reports,
        models_r0,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_resample(
    model: &TrainedModel,
    train_ds: &Dataset,
    test_ds: &Dataset,
    fingerprint: u64,
    calib_rows: &[Vec<f64>],
    eval_rows: &[Vec<f64>],
    malicious_rows: &[Vec<Vec<f64>>],
    eval: &EvalConfig,
) -> Result<ResampleEval, ExperimentError> {
    let test_scores = model.score_rows(fingerprint, &test_ds.rows)?;
    let (roc, auc) = roc_auc(&test_scores, &test_ds.labels)?;

    let calib_scores = model.score_rows(fingerprint, calib_rows)?;
    let tau = tau_of_p(&calib_scores, eval.p)?;

    let eval_scores = model.score_rows(fingerprint, eval_rows)?;
    let benign_pass_rate = if eval_scores.is_empty() {
        1.0
    } else {
        eval_scores.iter().filter(|&&s| s < tau).count() as f64 / eval_scores.len() as f64
    };

    let number_scores: Vec<Vec<f64>> = malicious_rows
        .iter()
        .map(|rows| model.score_rows(fingerprint, rows))
        .collect::<Result<_, _>>()?;
    let afp_per_m = eval
        .m_values
        .iter()
        .map(|&m| afp(&number_scores, tau, m))
        .collect::<Result<Vec<_>, _>>()?;
    let mr = (1..=eval.mr_max_n)
        .map(|n| mr_at(&number_scores, tau, n))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ResampleEval {
        auc,
        roc,
        tau,
        afp_per_m,
        mr,
        benign_pass_rate,
        train_rows: train_ds.len(),
        train_positives: train_ds.positives(),
    })
}

fn average_runs(
    kind: ModelKind,
    runs: Vec<ResampleEval>,
    spec: &ExperimentSpec,
    prepared: &PreparedData,
) -> Result<EvalReport, ExperimentError> {
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&ResampleEval) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let afp_entries = spec
        .eval
        .m_values
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let afp_mean = runs.iter().map(|r| r.afp_per_m[j]).sum::<f64>() / n;
            Ok(AfpEntry {
                m,
                afp: afp_mean,
                baseline_afp: (m + 1) as f64,
                reduction: reduction_rate(afp_mean, m)?,
                baseline_reduction: 0.0,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    let mr_curve = (1..=spec.eval.mr_max_n)
        .map(|nn| {
            let idx = (nn - 1) as usize;
            (nn, runs.iter().map(|r| r.mr[idx]).sum::<f64>() / n)
        })
        .collect();
    Ok(EvalReport {
        model: kind.name().to_string(),
        auc: mean(&|r| r.auc),
        auc_runs: runs.iter().map(|r| r.auc).collect(),
        tau: mean(&|r| r.tau),
        tau_runs: runs.iter().map(|r| r.tau).collect(),
        afp: afp_entries,
        mr_curve,
        roc: runs.first().expect("at least one resample").roc.clone(),
        benign_pass_rate: mean(&|r| r.benign_pass_rate),
        benign_eval_records: prepared.benign_eval_idx.len(),
        benign_calib_records: prepared.benign_calib_idx.len(),
        malicious_numbers: prepared.malicious_test.len(),
        train_rows: runs.last().map_or(0, |r| r.train_rows),
        train_positives: runs.last().map_or(0, |r| r.train_positives),
    })
}

/// AUC per model averaged over resamples, the light path shared by the
/// ablation and top-10 analyses. Resample seeds match `run_experiment`,
/// so selector cells are paired comparisons.
pub fn auc_table(
    prepared: &PreparedData,
    selector: &FeatureSelector,
    spec: &ExperimentSpec,
) -> Result<Vec<ModelAuc>, ExperimentError> {
    let train_pool = subset(&prepared.examples, &prepared.train_idx);
    let test_pool = subset(&prepared.examples, &prepared.test_idx);
    let mut sums = vec![0.0f64; spec.models.len()];
    for r in 0..spec.resamples {
        let train_ds = build_dataset(
            &train_pool,
            selector,
            Sampling::Balanced { seed: derive_seed(spec.seed, SALT_TRAIN + 10 * r as u64) },
        )?;
        let test_ds = build_dataset(
            &test_pool,
            selector,
            Sampling::Balanced { seed: derive_seed(spec.seed, SALT_TEST + 10 * r as u64) },
        )?;
        let fingerprint = train_ds.schema.fingerprint();
        for (slot, &kind) in spec.models.iter().enumerate() {
            let model = train(
                kind,
                &train_ds,
                &spec.model_config,
                derive_seed(spec.seed, SALT_MODEL + 10 * r as u64),
            )?;
            let scores = model.score_rows(fingerprint, &test_ds.rows)?;
            let (_, auc) = roc_auc(&scores, &test_ds.labels)?;
            sums[slot] += auc;
        }
    }
    Ok(spec
        .models
        .iter()
        .zip(sums)
        .map(|(&kind, sum)| ModelAuc { model: kind.name().to_string(), auc: sum / spec.resamples as f64 })
        .collect())
}

/// AUC over the four feature subsets, in table row order.
pub fn ablation_suite(spec: &ExperimentSpec) -> Result<AblationOutput, ExperimentError> {
    let generated = generate_log(&spec.generator)?;
    ablation_suite_on(&generated.log, &generated.labels, spec)
}

pub fn ablation_suite_on(
    log: &CallLog,
    labels: &LabelTable,
    spec: &ExperimentSpec,
) -> Result<AblationOutput, ExperimentError> {
    let prepared = prepare(log, labels, spec)?;
    let selectors = [
        FeatureSelector::All,
        FeatureSelector::NoHistoric,
        FeatureSelector::NoCrossref,
        FeatureSelector::Basic,
    ];
    let mut rows = Vec::with_capacity(selectors.len());
    for selector in selectors {
        let auc = auc_table(&prepared, &selector, spec)?;
        rows.push(AblationRow {
            selector_label: selector.label().to_string(),
            features: selector.features()?.len(),
            auc,
        });
    }
    Ok(AblationOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: spec.seed,
        spec: spec.clone(),
        rows,
    })
}

/// Trains the boosted model, ranks features by split frequency, and
/// re-evaluates every model on the top-10 subset.
pub fn importance_and_top10(spec: &ExperimentSpec) -> Result<ImportanceOutput, ExperimentError> {
    let generated = generate_log(&spec.generator)?;
    importance_and_top10_on(&generated.log, &generated.labels, spec)
}

pub fn importance_and_top10_on(
    log: &CallLog,
    labels: &LabelTable,
    spec: &ExperimentSpec,
) -> Result<ImportanceOutput, ExperimentError> {
    let prepared = prepare(log, labels, spec)?;
    let train_pool = subset(&prepared.examples, &prepared.train_idx);
    let train_ds = build_dataset(
        &train_pool,
        &FeatureSelector::All,
        Sampling::Balanced { seed: derive_seed(spec.seed, SALT_TRAIN) },
    )?;
    let ranked_model = train(
        ModelKind::Gbt,
        &train_ds,
        &spec.model_config,
        derive_seed(spec.seed, SALT_MODEL),
    )?;
    let usage: Vec<FeatureUsage> = feature_usage_histogram(&ranked_model)?;

    // Top 10 named features by split frequency; pad from the roster if
    // fewer than 10 were ever used.
    let mut top10: Vec<crate::features::FeatureId> = usage
        .iter()
        .map(|u| u.feature)
        .filter(|f| *f != crate::features::FeatureId::HistoryLen)
        .take(10)
        .collect();
    for f in crate::features::FeatureId::roster() {
        if top10.len() >= 10 {
            break;
        }
        if !top10.contains(&f) {
            top10.push(f);
        }
    }

    let auc_all = auc_table(&prepared, &FeatureSelector::All, spec)?;
    let auc_top10 = auc_table(&prepared, &FeatureSelector::Top10(top10.clone()), spec)?;
    let example_tree = crate::models::dump_tree(&ranked_model, 0)?;
    Ok(ImportanceOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: spec.seed,
        usage,
        top10,
        auc_all,
        auc_top10,
        example_tree,
    })
}

/// Per-M comparison of each model's averaged AFP against the blacklist.
pub fn compare_baseline(output: &ExperimentOutput) -> Vec<BaselineRow> {
    let mut rows = Vec::new();
    for report in &output.reports {
        for entry in &report.afp {
            rows.push(BaselineRow {
                model: report.model.clone(),
                m: entry.m,
                model_afp: entry.afp,
                baseline_afp: entry.baseline_afp,
                model_reduction: entry.reduction,
                baseline_reduction: entry.baseline_reduction,
            });
        }
    }
    rows
}
