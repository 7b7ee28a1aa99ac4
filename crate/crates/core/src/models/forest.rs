//! Random-forest training: bootstrap samples, Gini-impurity splits over
//! a random feature subset per split, depth-capped trees whose leaves
//! hold class-1 fractions; the forest scores by averaging.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::Dataset;

use super::tree::{BestSplit, ColumnIndex, Combine, Forest, Tree, TreeNode, MIN_GAIN};
use super::{ForestConfig, ModelError, ModelKind, ModelParams, TrainedModel};

fn gini(w: f64, w1: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p1 = w1 / w;
    let p0 = 1.0 - p1;
    1.0 - p1 * p1 - p0 * p0
}

/// Per-split candidates are drawn at the named-feature level — a
/// one-hot block counts once, not per column — then expanded to their
/// columns, ascending so the split search's first-wins tie-break favors
/// low column indices.
fn sample_columns(
    groups: &[(usize, usize)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..groups.len()).collect();
    let take = count.min(groups.len());
    for i in 0..take {
        let j = rng.gen_range(i..groups.len());
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool.sort_unstable();
    let mut columns = Vec::new();
    for &g in &pool {
        let (offset, width) = groups[g];
        columns.extend(offset..offset + width);
    }
    columns
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    columns: &'a ColumnIndex,
    weight: Vec<u32>,
    config: &'a ForestConfig,
    /// `(column offset, width)` per named feature.
    groups: &'a [(usize, usize)],
    candidates: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, in_node: &[bool], w: f64, w1: f64, depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let leaf = || TreeNode::Leaf { value: w1 / w };
        if depth >= self.config.max_depth
            || w1 == 0.0
            || w1 == w
            || w < 2.0 * self.config.min_leaf as f64
        {
            return leaf();
        }

        let features = sample_columns(self.groups, self.candidates, rng);
        let parent_impurity = gini(w, w1);
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            let mut wl = 0.0f64;
            let mut wl1 = 0.0f64;
            let mut prev: Option<f64> = None;
            for &row in &self.columns.cols[f] {
                let row = row as usize;
                if !in_node[row] || self.weight[row] == 0 {
                    continue;
                }
                let value = self.rows[row][f];
                if let Some(p) = prev {
                    if value > p && wl >= self.config.min_leaf as f64 {
                        let (wr, wr1) = (w - wl, w1 - wl1);
                        if wr >= self.config.min_leaf as f64 {
                            let children = (wl * gini(wl, wl1) + wr * gini(wr, wr1)) / w;
                            let gain = parent_impurity - children;
                            if gain > best.map_or(MIN_GAIN, |b| b.gain + MIN_GAIN) {
                                best = Some(BestSplit {
                                    feature: f,
                                    threshold: (p + value) / 2.0,
                                    gain,
                                });
                            }
                        }
                    }
                }
                let wt = self.weight[row] as f64;
                wl += wt;
                wl1 += wt * self.labels[row] as u8 as f64;
                prev = Some(value);
            }
        }

        let Some(split) = best else {
            return leaf();
        };
        let mut left_mask = vec![false; in_node.len()];
        let mut right_mask = vec![false; in_node.len()];
        let (mut wl, mut wl1) = (0.0, 0.0);
        for (row, &inside) in in_node.iter().enumerate() {
            if !inside || self.weight[row] == 0 {
                continue;
            }
            if self.rows[row][split.feature] < split.threshold {
                left_mask[row] = true;
                let wt = self.weight[row] as f64;
                wl += wt;
                wl1 += wt * self.labels[row] as u8 as f64;
            } else {
                right_mask[row] = true;
            }
        }
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(&left_mask, wl, wl1, depth + 1, rng)),
            right: Box::new(self.build(&right_mask, w - wl, w1 - wl1, depth + 1, rng)),
        }
    }
}

/// Trains the forest; per-tree randomness derives from `seed` and the
/// tree index, so the fit reproduces exactly.
pub fn train_random_forest(
    dataset: &Dataset,
    config: &ForestConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    if dataset.len() < 2 {
        return Err(ModelError::EmptyData);
    }
    if config.trees == 0 || config.max_depth == 0 || config.min_leaf == 0 {
        return Err(ModelError::InvalidConfig("trees, max_depth, min_leaf must be >= 1".into()));
    }
    let n = dataset.len();
    let width = dataset.width();
    let columns = ColumnIndex::build(&dataset.rows, width);
    let groups: Vec<(usize, usize)> =
        dataset.schema.entries().iter().map(|e| (e.offset, e.encoding.width())).collect();
    let candidates = if config.feature_candidates == 0 {
        ((groups.len() as f64).sqrt().round() as usize).max(1)
    } else {
        config.feature_candidates.min(groups.len())
    };

    let mut trees = Vec::with_capacity(config.trees);
    for t in 0..config.trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let mut builder = TreeBuilder {
            rows: &dataset.rows,
            labels: &dataset.labels,
            columns: &columns,
            weight: vec![0u32; n],
            config,
            groups: &groups,
            candidates,
        };
        for _ in 0..n {
            builder.weight[rng.gen_range(0..n)] += 1;
        }
        let in_node: Vec<bool> = builder.weight.iter().map(|&w| w > 0).collect();
        let (mut w, mut w1) = (0.0, 0.0);
        for (row, &wt) in builder.weight.iter().enumerate() {
            w += wt as f64;
            w1 += wt as f64 * dataset.labels[row] as u8 as f64;
        }
        let root = builder.build(&in_node, w, w1, 0, &mut rng);
        trees.push(Tree { root });
    }
    Ok(TrainedModel {
        kind: ModelKind::Forest,
        schema: (*dataset.schema).clone(),
        schema_fingerprint: dataset.schema.fingerprint(),
        params: ModelParams::Trees(Forest { trees, combine: Combine::Mean }),
    })
}
