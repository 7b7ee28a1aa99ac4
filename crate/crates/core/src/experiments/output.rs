//! Report containers and their JSON/CSV writers.
//!
//! Every table goes out twice, as JSON (the full structure, spec and
//! seed embedded) and as CSV (one flat file per table, for plotting).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::FeatureId;
use crate::metrics::EvalReport;
use crate::models::FeatureUsage;

use super::ExperimentSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub reports: Vec<EvalReport>,
    /// First-resample trained models, written as standalone artifacts
    /// rather than embedded in the report.
    #[serde(skip)]
    pub models_r0: Vec<crate::models::TrainedModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAuc {
    pub model: String,
    pub auc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub selector_label: String,
    pub features: usize,
    pub auc: Vec<ModelAuc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutput {
    pub version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceOutput {
    pub version: String,
    pub seed: u64,
    pub usage: Vec<FeatureUsage>,
    pub top10: Vec<FeatureId>,
    pub auc_all: Vec<ModelAuc>,
    pub auc_top10: Vec<ModelAuc>,
    /// Text dump of the ranked model's first tree.
    pub example_tree: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub m: u32,
    pub model_afp: f64,
    pub baseline_afp: f64,
    pub model_reduction: f64,
    pub baseline_reduction: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")
}

/// report.json plus report.csv, mr_curve.csv, per-model ROC curves,
/// and the first resample's model files.
pub fn write_experiment_outputs(dir: &Path, output: &ExperimentOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), output)?;

    for report in &output.reports {
        let mut file = fs::File::create(dir.join(format!("roc_{}.csv", report.model)))?;
        report.roc.write_csv(&mut file)?;
    }
    if !output.models_r0.is_empty() {
        let models_dir = dir.join("models");
        fs::create_dir_all(&models_dir)?;
        for model in &output.models_r0 {
            fs::write(
                models_dir.join(format!("model_{}.json", model.kind.name())),
                crate::models::serialize_model(model),
            )?;
        }
    }

    let mut csv = String::from("model,auc,tau,benign_pass_rate,m,afp,baseline_afp,reduction\n");
    for report in &output.reports {
        for entry in &report.afp {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                report.model,
                report.auc,
                report.tau,
                report.benign_pass_rate,
                entry.m,
                entry.afp,
                entry.baseline_afp,
                entry.reduction,
            ));
        }
    }
    fs::write(dir.join("report.csv"), csv)?;

    let mut mr = String::from("model,n,mr\n");
    for report in &output.reports {
        for (n, value) in &report.mr_curve {
            mr.push_str(&format!("{},{n},{value}\n", report.model));
        }
    }
    fs::write(dir.join("mr_curve.csv"), mr)
}

/// ablation.json plus ablation.csv, rows in table order.
pub fn write_ablation_outputs(dir: &Path, output: &AblationOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("ablation.json"), output)?;
    let mut csv = String::from("selector,features");
    for cell in &output.rows[0].auc {
        csv.push_str(&format!(",{}", cell.model));
    }
    csv.push('\n');
    for row in &output.rows {
        csv.push_str(&format!("{},{}", row.selector_label, row.features));
        for cell in &row.auc {
            csv.push_str(&format!(",{}", cell.auc));
        }
        csv.push('\n');
    }
    fs::write(dir.join("ablation.csv"), csv)
}

/// importance.json plus usage and top-10 AUC tables as CSV.
pub fn write_importance_outputs(dir: &Path, output: &ImportanceOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("importance.json"), output)?;

    let mut usage = String::from("feature,total");
    let levels = output.usage.iter().map(|u| u.by_level.len()).max().unwrap_or(0);
    for level in 1..=levels {
        usage.push_str(&format!(",level{level}"));
    }
    usage.push('\n');
    for u in &output.usage {
        usage.push_str(&format!("{},{}", u.feature, u.total));
        for level in 0..levels {
            usage.push_str(&format!(",{}", u.by_level.get(level).copied().unwrap_or(0)));
        }
        usage.push('\n');
    }
    fs::write(dir.join("feature_usage.csv"), usage)?;

    let mut auc = String::from("model,auc_all,auc_top10\n");
    for (all, top) in output.auc_all.iter().zip(&output.auc_top10) {
        auc.push_str(&format!("{},{},{}\n", all.model, all.auc, top.auc));
    }
    fs::write(dir.join("top10_auc.csv"), auc)?;
    fs::write(dir.join("tree0.txt"), &output.example_tree)
}
