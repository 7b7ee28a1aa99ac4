//! The model suite behind one scoring interface.
//!
//! Five kinds: logistic regression, a linear SVM, a two-layer MLP with
//! 20 hidden units, a random forest of 100 depth-3 trees, and 100
//! rounds of gradient-boosted depth-3 trees. Every kind emits a real
//! score (probabilities for logistic/MLP/boosting, the raw margin for
//! the SVM, a mean leaf fraction for the forest); thresholding the
//! score gives the malicious/benign decision. Training is reproducible
//! bit for bit from `(data, config, seed)`.

mod forest;
mod gbt;
mod linear;
mod mlp;
mod tree;

pub use forest::train_random_forest;
pub use gbt::train_gbt;
pub use linear::{logistic_loss_grad, svm_hinge_loss, train_linear_svm, train_logistic};
pub use mlp::{mlp_loss_grad, train_mlp, MlpParams};
pub use tree::{dump_tree, feature_usage_histogram, FeatureUsage, Forest, Tree, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Dataset, EncodedVector, FeatureSchema};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("schema mismatch: model was trained on fingerprint {expected:#x}, got {got:#x}")]
    SchemaMismatch { expected: u64, got: u64 },
    #[error("non-finite loss at epoch {epoch}: {details}")]
    NonFiniteLoss { epoch: usize, details: String },
    #[error("model payload is corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("operation needs a tree model, got {0}")]
    NotATreeModel(ModelKind),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Svm,
    Mlp,
    Forest,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Logistic, ModelKind::Svm, ModelKind::Mlp, ModelKind::Forest, ModelKind::Gbt];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Forest => "forest",
            ModelKind::Gbt => "gbt",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Probabilistic kinds score in [0, 1]; the SVM margin is unbounded.
    pub fn is_probabilistic(self) -> bool {
        !matches!(self, ModelKind::Svm)
    }

    pub fn is_tree(self) -> bool {
        matches!(self, ModelKind::Forest | ModelKind::Gbt)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Kind-specific parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ModelParams {
    Linear { weights: Vec<f64>, bias: f64, sigmoid: bool },
    Mlp(MlpParams),
    Trees(Forest),
}

/// A trained scorer bound to the feature schema it was fitted on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub schema: FeatureSchema,
    pub schema_fingerprint: u64,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Scores one encoded vector after checking its schema.
    pub fn score(&self, vector: &EncodedVector) -> Result<f64, ModelError> {
        let got = vector.schema.fingerprint();
        if got != self.schema_fingerprint {
            return Err(ModelError::SchemaMismatch { expected: self.schema_fingerprint, got });
        }
        Ok(self.score_values(&vector.values))
    }

    /// Scores raw rows that are known to follow the model's schema.
    pub fn score_rows(&self, fingerprint: u64, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if fingerprint != self.schema_fingerprint {
            return Err(ModelError::SchemaMismatch {
                expected: self.schema_fingerprint,
                got: fingerprint,
            });
        }
        Ok(rows.iter().map(|r| self.score_values(r)).collect())
    }

    /// The bare scoring function; callers are responsible for the schema.
    pub fn score_values(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear { weights, bias, sigmoid } => {
                let margin = dot(weights, x) + bias;
                if *sigmoid { sigmoid_of(margin) } else { margin }
            }
            ModelParams::Mlp(params) => params.score(x),
            ModelParams::Trees(forest) => forest.score(x),
        }
    }

    pub fn forest(&self) -> Result<&Forest, ModelError> {
        match &self.params {
            ModelParams::Trees(forest) => Ok(forest),
            _ => Err(ModelError::NotATreeModel(self.kind)),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid_of(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_two_classes(dataset: &Dataset) -> Result<(), ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let positives = dataset.positives();
    if positives == 0 || positives == dataset.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub grad_tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { epochs: 400, learning_rate: 0.5, l2: 1e-4, grad_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub fit_bias: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { epochs: 600, learning_rate: 0.1, l2: 1e-4, fit_bias: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 20, epochs: 50, batch: 64, learning_rate: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Named features drawn per split; 0 means sqrt of the feature count.
    pub feature_candidates: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 100, max_depth: 3, min_leaf: 1, feature_candidates: 15 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub l2_leaf: f64,
    pub min_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig { rounds: 100, max_depth: 3, shrinkage: 0.1, l2_leaf: 1.0, min_leaf: 1 }
    }
}

/// One bundle with every kind's knobs, for config files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub logistic: LogisticConfig,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
}

/// Trains one model kind; `seed` drives every stochastic choice.
pub fn train(
    kind: ModelKind,
    dataset: &Dataset,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    match kind {
        ModelKind::Logistic => train_logistic(dataset, &config.logistic),
        ModelKind::Svm => train_linear_svm(dataset, &config.svm),
        ModelKind::Mlp => train_mlp(dataset, &config.mlp, seed),
        ModelKind::Forest => train_random_forest(dataset, &config.forest, seed),
        ModelKind::Gbt => train_gbt(dataset, &config.gbt),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: TrainedModel,
}

/// Versioned JSON container; scores survive a round trip bit for bit.
pub fn serialize_model(model: &TrainedModel) -> Vec<u8> {
    serde_json::to_vec(&ModelFile { version: MODEL_FILE_VERSION, model: model.clone() })
        .expect("model serialization cannot fail")
}

pub fn deserialize_model(bytes: &[u8]) -> Result<TrainedModel, ModelError> {
    let file: ModelFile =
        serde_json::from_slice(bytes).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    if file.version != MODEL_FILE_VERSION {
        return Err(ModelError::Version(file.version));
    }
    Ok(file.model)
}


#[cfg(test)]
mod tests {
    use super::testutil::gaussian_blobs;
    use super::*;

    #[test]
    fn serialize_round_trip_scores_are_bit_identical() {
        let data = gaussian_blobs(60, 4, 2.0, 9);
        for kind in ModelKind::ALL {
            let model = train(kind, &data, &ModelConfig::default(), 3).unwrap();
            let restored = deserialize_model(&serialize_model(&model)).unwrap();
            for row in data.rows.iter().take(100) {
                assert_eq!(
                    model.score_values(row).to_bits(),
                    restored.score_values(row).to_bits(),
                    "{kind} round trip"
                );
            }
        }
    }

    #[test]
    fn truncated_payload_is_a_corrupt_error() {
        let data = gaussian_blobs(30, 3, 2.0, 9);
        let model = train(ModelKind::Logistic, &data, &ModelConfig::default(), 0).unwrap();
        let bytes = serialize_model(&model);
        let err = deserialize_model(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, ModelError::Corrupt(_)));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let data = gaussian_blobs(30, 3, 2.0, 9);
        let model = train(ModelKind::Logistic, &data, &ModelConfig::default(), 0).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_slice(&serialize_model(&model)).unwrap();
        value["version"] = serde_json::json!(99);
        let err = deserialize_model(&serde_json::to_vec(&value).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::Version(99)));
    }

    #[test]
    fn schema_mismatch_is_rejected_at_scoring_time() {
        use crate::features::{encode, FeatureSelector, RawFeatures};
        let data = gaussian_blobs(30, 3, 2.0, 9);
        let model = train(ModelKind::Logistic, &data, &ModelConfig::default(), 0).unwrap();
        let raw = RawFeatures::default();
        let wrong = encode(&raw, &FeatureSelector::All).unwrap();
        assert!(matches!(model.score(&wrong), Err(ModelError::SchemaMismatch { .. })));
        let right = encode(&raw, &FeatureSelector::Basic).unwrap();
        assert!(model.score(&right).is_ok());
    }

    #[test]
    fn identical_scores_for_identical_inputs() {
        let data = gaussian_blobs(40, 4, 1.5, 2);
        for kind in ModelKind::ALL {
            let model = train(kind, &data, &ModelConfig::default(), 7).unwrap();
            let x = &data.rows[5];
            assert_eq!(model.score_values(x).to_bits(), model.score_values(x).to_bits());
        }
    }

    #[test]
    fn training_is_reproducible_given_seed() {
        let data = gaussian_blobs(50, 5, 1.0, 4);
        for kind in ModelKind::ALL {
            let a = train(kind, &data, &ModelConfig::default(), 11).unwrap();
            let b = train(kind, &data, &ModelConfig::default(), 11).unwrap();
            assert_eq!(serialize_model(&a), serialize_model(&b), "{kind} not reproducible");
        }
    }

    #[test]
    fn single_class_data_is_rejected_where_required() {
        let data = testutil::synthetic_dataset(
            vec![vec![0.0; 4]; 10],
            vec![true; 10],
        );
        for kind in [ModelKind::Logistic, ModelKind::Svm, ModelKind::Mlp, ModelKind::Gbt] {
            assert!(
                matches!(
                    train(kind, &data, &ModelConfig::default(), 0),
                    Err(ModelError::SingleClass)
                ),
                "{kind} should reject single-class data"
            );
        }
        // The forest trains on constant labels: every leaf is that label.
        let forest = train(ModelKind::Forest, &data, &ModelConfig::default(), 0).unwrap();
        for row in &data.rows {
            assert_eq!(forest.score_values(row), 1.0);
        }
    }
}
