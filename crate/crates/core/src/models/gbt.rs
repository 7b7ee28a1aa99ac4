//! Gradient-boosted trees on the logistic loss with second-order split
//! gain, L2 leaf regularization, and shrinkage.
//!
//! The base score is the log-odds of the training prior; each round
//! fits one depth-capped regression tree to the gradient/hessian pairs
//! by exact greedy search over every feature, and the final score is
//! the sigmoid of the summed leaf values. Training is deterministic:
//! no sampling, ties broken toward the lowest feature index and
//! threshold.

use crate::features::Dataset;

use super::tree::{BestSplit, ColumnIndex, Combine, Forest, Tree, TreeNode, MIN_GAIN};
use super::{check_two_classes, sigmoid_of, GbtConfig, ModelError, ModelKind, ModelParams,
            TrainedModel};

struct GbtBuilder<'a> {
    rows: &'a [Vec<f64>],
    columns: &'a ColumnIndex,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbtConfig,
}

impl GbtBuilder<'_> {
    fn leaf(&self, g: f64, h: f64) -> TreeNode {
        TreeNode::Leaf { value: self.config.shrinkage * (-g / (h + self.config.l2_leaf)) }
    }

    fn gain_term(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.config.l2_leaf)
    }

    fn build(&self, in_node: &[bool], count: usize, g: f64, h: f64, depth: usize) -> TreeNode {
        if depth >= self.config.max_depth || count < 2 * self.config.min_leaf {
            return self.leaf(g, h);
        }
        let parent_term = self.gain_term(g, h);
        let mut best: Option<BestSplit> = None;
        for (f, col) in self.columns.cols.iter().enumerate() {
            let mut gl = 0.0f64;
            let mut hl = 0.0f64;
            let mut nl = 0usize;
            let mut prev: Option<f64> = None;
            for &row in col {
                let row = row as usize;
                if !in_node[row] {
                    continue;
                }
                let value = self.rows[row][f];
                if let Some(p) = prev {
                    if value > p && nl >= self.config.min_leaf && count - nl >= self.config.min_leaf
                    {
                        let gain = 0.5
                            * (self.gain_term(gl, hl)
                                + self.gain_term(g - gl, h - hl)
                                - parent_term);
                        if gain > best.map_or(MIN_GAIN, |b| b.gain + MIN_GAIN) {
                            best =
                                Some(BestSplit { feature: f, threshold: (p + value) / 2.0, gain });
                        }
                    }
                }
                gl += self.grad[row];
                hl += self.hess[row];
                nl += 1;
                prev = Some(value);
            }
        }

        let Some(split) = best else {
            return self.leaf(g, h);
        };
        let mut left_mask = vec![false; in_node.len()];
        let mut right_mask = vec![false; in_node.len()];
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for (row, &inside) in in_node.iter().enumerate() {
            if !inside {
                continue;
            }
            if self.rows[row][split.feature] < split.threshold {
                left_mask[row] = true;
                gl += self.grad[row];
                hl += self.hess[row];
                nl += 1;
            } else {
                right_mask[row] = true;
            }
        }
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(&left_mask, nl, gl, hl, depth + 1)),
            right: Box::new(self.build(&right_mask, count - nl, g - gl, h - hl, depth + 1)),
        }
    }
}

pub fn train_gbt(dataset: &Dataset, config: &GbtConfig) -> Result<TrainedModel, ModelError> {
    check_two_classes(dataset)?;
    if config.max_depth == 0 || config.min_leaf == 0 {
        return Err(ModelError::InvalidConfig("max_depth and min_leaf must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.shrinkage) || config.l2_leaf < 0.0 {
        return Err(ModelError::InvalidConfig(
            "shrinkage must be in [0, 1] and l2_leaf non-negative".into(),
        ));
    }
    let n = dataset.len();
    let prior = (dataset.positives() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base = (prior / (1.0 - prior)).ln();

    let columns = ColumnIndex::build(&dataset.rows, dataset.width());
    let mut margins = vec![base; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let in_root = vec![true; n];
    let mut trees = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let (mut g_sum, mut h_sum) = (0.0, 0.0);
        for i in 0..n {
            let p = sigmoid_of(margins[i]);
            grad[i] = p - dataset.labels[i] as u8 as f64;
            hess[i] = p * (1.0 - p);
            g_sum += grad[i];
            h_sum += hess[i];
        }
        let builder =
            GbtBuilder { rows: &dataset.rows, columns: &columns, grad: &grad, hess: &hess, config };
        let root = builder.build(&in_root, n, g_sum, h_sum, 0);
        for (margin, row) in margins.iter_mut().zip(&dataset.rows) {
            *margin += root.eval(row);
        }
        trees.push(Tree { root });
    }
    Ok(TrainedModel {
        kind: ModelKind::Gbt,
        schema: (*dataset.schema).clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        params: ModelParams::Trees(Forest { trees, combine: Combine::SigmoidSum { base } }),
    })
}
