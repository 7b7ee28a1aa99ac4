//! Logistic regression and the linear-kernel SVM.
//!
//! Both train by deterministic full-batch (sub)gradient descent, so a
//! fit depends only on the data and the config. The logistic model
//! scores the class probability `sigmoid(w.x + b)`; the SVM scores the
//! raw margin `w.x + b`.

use crate::features::Dataset;

use super::{check_two_classes, dot, sigmoid_of, LogisticConfig, ModelError, ModelKind,
            ModelParams, SvmConfig, TrainedModel};

/// L2-regularized mean log-loss and its gradient at `(weights, bias)`.
///
/// Loss: `-(1/n) sum[y ln p + (1-y) ln(1-p)] + (l2/2) |w|^2` with
/// `p = sigmoid(w.x + b)`.
pub fn logistic_loss_grad(
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = dot(weights, x) + bias;
        let p = sigmoid_of(z);
        // Numerically safe cross-entropy via the log-sum-exp form:
        // -y z + ln(1 + e^z), stable for both signs of z.
        loss += z.max(0.0) - (y as u8 as f64) * z + (-z.abs()).exp().ln_1p();
        let err = p - y as u8 as f64;
        for (g, xi) in grad_w.iter_mut().zip(x) {
            *g += err * xi;
        }
        grad_b += err;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Per-column standardization of the training matrix. Gradient descent
/// runs in the standardized basis (far better conditioned across the
/// mixed one-hot/log1p columns); the fitted parameters fold back into
/// raw-feature space afterwards, so the stored model scores raw
/// vectors directly.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; width];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Standardizer { mean, scale }
    }

    fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((x, m), s)| (x - m) / s)
                    .collect()
            })
            .collect()
    }

    /// Maps standardized-space parameters to raw-space ones that score
    /// identically.
    fn fold_back(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let raw_weights: Vec<f64> =
            weights.iter().zip(&self.scale).map(|(w, s)| w / s).collect();
        let raw_bias = bias
            - raw_weights.iter().zip(&self.mean).map(|(w, m)| w * m).sum::<f64>();
        (raw_weights, raw_bias)
    }
}

/// Full-batch gradient descent on the regularized log-loss, stopping at
/// the gradient-norm tolerance or the epoch budget.
pub fn train_logistic(dataset: &Dataset, config: &LogisticConfig) -> Result<TrainedModel, ModelError> {
    check_two_classes(dataset)?;
    let width = dataset.width();
    let standardizer = Standardizer::fit(&dataset.rows);
    let rows = standardizer.transform(&dataset.rows);
    let mut weights = vec![0.0; width];
    let mut bias = 0.0;
    for epoch in 0..config.epochs {
        let (loss, grad_w, grad_b) =
            logistic_loss_grad(&rows, &dataset.labels, &weights, bias, config.l2);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, details: format!("loss = {loss}") });
        }
        let gnorm =
            (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if gnorm < config.grad_tolerance {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_b;
    }
    let (weights, bias) = standardizer.fold_back(&weights, bias);
    Ok(TrainedModel {
        kind: ModelKind::Logistic,
        schema: (*dataset.schema).clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        params: ModelParams::Linear { weights, bias, sigmoid: true },
    })
}

/// Mean hinge loss plus L2 at `(weights, bias)` with labels in {-1, +1}.
fn hinge_loss_subgrad(
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
    fit_bias: bool,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &label) in rows.iter().zip(labels) {
        let y = if label { 1.0 } else { -1.0 };
        let margin = y * (dot(weights, x) + bias);
        if margin < 1.0 {
            loss += 1.0 - margin;
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g -= y * xi;
            }
            grad_b -= y;
        }
    }
    loss /= n;
    grad_b = if fit_bias { grad_b / n } else { 0.0 };
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Deterministic full-batch subgradient descent on hinge loss + L2.
pub fn train_linear_svm(dataset: &Dataset, config: &SvmConfig) -> Result<TrainedModel, ModelError> {
    check_two_classes(dataset)?;
    let width = dataset.width();
    let standardizer = Standardizer::fit(&dataset.rows);
    let rows = standardizer.transform(&dataset.rows);
    let mut weights = vec![0.0; width];
    let mut bias = 0.0;
    for epoch in 0..config.epochs {
        let (loss, grad_w, grad_b) = hinge_loss_subgrad(
            &rows,
            &dataset.labels,
            &weights,
            bias,
            config.l2,
            config.fit_bias,
        );
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, details: format!("loss = {loss}") });
        }
        // 1/sqrt(t) decay keeps late subgradient steps from oscillating.
        let step = config.learning_rate / (1.0 + (epoch as f64).sqrt());
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        bias -= step * grad_b;
    }
    let (weights, bias) = standardizer.fold_back(&weights, bias);
    Ok(TrainedModel {
        kind: ModelKind::Svm,
        schema: (*dataset.schema).clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        params: ModelParams::Linear { weights, bias, sigmoid: false },
    })
}

/// Mean hinge loss of a trained SVM on a dataset (training diagnostics).
pub fn svm_hinge_loss(model: &TrainedModel, dataset: &Dataset) -> Result<f64, ModelError> {
    let ModelParams::Linear { weights, bias, sigmoid: false } = &model.params else {
        return Err(ModelError::InvalidConfig("hinge loss needs a linear margin model".into()));
    };
    let mut loss = 0.0;
    for (x, &label) in dataset.rows.iter().zip(&dataset.labels) {
        let y = if label { 1.0 } else { -1.0 };
        loss += (1.0 - y * (dot(weights, x) + bias)).max(0.0);
    }
    Ok(loss / dataset.len() as f64)
}
