//! Two-layer feed-forward network: ReLU hidden layer, two-way softmax.
//!
//! Trained with mini-batch gradient descent on cross-entropy, seeded
//! uniform Xavier initialization, seeded shuffling. The score is the
//! malicious-class probability.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::Dataset;

use super::{check_two_classes, MlpConfig, ModelError, ModelKind, ModelParams, TrainedModel};

/// Dense parameters; matrices are stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub inputs: usize,
    pub hidden: usize,
    /// hidden x inputs
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    /// 2 x hidden
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl MlpParams {
    fn zeros(inputs: usize, hidden: usize) -> Self {
        MlpParams {
            inputs,
            hidden,
            w_in: vec![0.0; hidden * inputs],
            b_in: vec![0.0; hidden],
            w_out: vec![0.0; 2 * hidden],
            b_out: vec![0.0; 2],
        }
    }

    /// Hidden activations, pre-softmax outputs.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, [f64; 2]) {
        let mut h = vec![0.0; self.hidden];
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w_in[j * self.inputs..(j + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b_in[j];
            *hj = z.max(0.0);
        }
        let mut z = [self.b_out[0], self.b_out[1]];
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.w_out[k * self.hidden..(k + 1) * self.hidden];
            *zk += row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
        }
        (h, z)
    }

    /// Class probabilities; they sum to one up to rounding.
    pub fn probabilities(&self, x: &[f64]) -> [f64; 2] {
        let (_, z) = self.forward(x);
        softmax2(z)
    }

    /// Malicious-class probability.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.probabilities(x)[1]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.w_in.clone();
        flat.extend_from_slice(&self.b_in);
        flat.extend_from_slice(&self.w_out);
        flat.extend_from_slice(&self.b_out);
        flat
    }

    pub fn from_flat(inputs: usize, hidden: usize, flat: &[f64]) -> Self {
        let mut p = MlpParams::zeros(inputs, hidden);
        let (a, rest) = flat.split_at(hidden * inputs);
        let (b, rest) = rest.split_at(hidden);
        let (c, d) = rest.split_at(2 * hidden);
        p.w_in.copy_from_slice(a);
        p.b_in.copy_from_slice(b);
        p.w_out.copy_from_slice(c);
        p.b_out.copy_from_slice(d);
        p
    }
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Mean cross-entropy over the batch and its gradient, shaped like the
/// parameters.
pub fn mlp_loss_grad(params: &MlpParams, rows: &[Vec<f64>], labels: &[bool]) -> (f64, MlpParams) {
    let n = rows.len() as f64;
    let mut grads = MlpParams::zeros(params.inputs, params.hidden);
    let mut loss = 0.0;
    for (x, &label) in rows.iter().zip(labels) {
        let (h, z) = params.forward(x);
        let y = label as usize;
        let m = z[0].max(z[1]);
        let log_sum = ((z[0] - m).exp() + (z[1] - m).exp()).ln() + m;
        loss += log_sum - z[y];
        let p = softmax2(z);

        // Output layer: dz = p - onehot(y).
        let dz = [p[0] - (y == 0) as u8 as f64, p[1] - (y == 1) as u8 as f64];
        let mut dh = vec![0.0; params.hidden];
        for (k, &dzk) in dz.iter().enumerate() {
            grads.b_out[k] += dzk;
            for (j, hj) in h.iter().enumerate() {
                grads.w_out[k * params.hidden + j] += dzk * hj;
                dh[j] += params.w_out[k * params.hidden + j] * dzk;
            }
        }
        // Hidden layer through the ReLU gate.
        for (j, (&hj, dhj)) in h.iter().zip(&dh).enumerate() {
            if hj <= 0.0 {
                continue;
            }
            grads.b_in[j] += dhj;
            let row = &mut grads.w_in[j * params.inputs..(j + 1) * params.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += dhj * xi;
            }
        }
    }
    for g in grads
        .w_in
        .iter_mut()
        .chain(&mut grads.b_in)
        .chain(&mut grads.w_out)
        .chain(&mut grads.b_out)
    {
        *g /= n;
    }
    (loss / n, grads)
}

/// Mini-batch gradient descent with seeded init and shuffling.
pub fn train_mlp(dataset: &Dataset, config: &MlpConfig, seed: u64) -> Result<TrainedModel, ModelError> {
    check_two_classes(dataset)?;
    if config.hidden == 0 || config.batch == 0 {
        return Err(ModelError::InvalidConfig("hidden and batch must be >= 1".into()));
    }
    let inputs = dataset.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::zeros(inputs, config.hidden);
    let limit_in = (6.0 / (inputs + config.hidden) as f64).sqrt();
    for w in &mut params.w_in {
        *w = rng.gen_range(-limit_in..limit_in);
    }
    let limit_out = (6.0 / (config.hidden + 2) as f64).sqrt();
    for w in &mut params.w_out {
        *w = rng.gen_range(-limit_out..limit_out);
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch_rows: Vec<Vec<f64>> = Vec::with_capacity(config.batch);
    let mut batch_labels: Vec<bool> = Vec::with_capacity(config.batch);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            batch_rows.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_rows.push(dataset.rows[i].clone());
                batch_labels.push(dataset.labels[i]);
            }
            let (loss, grads) = mlp_loss_grad(&params, &batch_rows, &batch_labels);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    details: format!("batch of {} rows, loss = {loss}", batch_rows.len()),
                });
            }
            let lr = config.learning_rate;
            for (w, g) in params.w_in.iter_mut().zip(&grads.w_in) {
                *w -= lr * g;
            }
            for (w, g) in params.b_in.iter_mut().zip(&grads.b_in) {
                *w -= lr * g;
            }
            for (w, g) in params.w_out.iter_mut().zip(&grads.w_out) {
                *w -= lr * g;
            }
            for (w, g) in params.b_out.iter_mut().zip(&grads.b_out) {
                *w -= lr * g;
            }
        }
    }
    Ok(TrainedModel {
        kind: ModelKind::Mlp,
        schema: (*dataset.schema).clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        params: ModelParams::Mlp(params),
    })
}
