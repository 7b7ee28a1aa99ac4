//! Decision-tree structure shared by the random forest and the boosted
//! ensemble: traversal, combination rules, text dumps, and the
//! feature-usage histogram.

use serde::{Deserialize, Serialize};

use crate::features::FeatureId;

use super::{sigmoid_of, ModelError, TrainedModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    /// Follows "smaller goes left" to a leaf.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] < *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }

    pub fn internal_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.internal_nodes() + right.internal_nodes(),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn visit_splits(&self, level: usize, f: &mut impl FnMut(usize, usize)) {
        if let TreeNode::Split { feature, left, right, .. } = self {
            f(*feature, level);
            left.visit_splits(level + 1, f);
            right.visit_splits(level + 1, f);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub root: TreeNode,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }
}

/// How per-tree outputs combine into one score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Combine {
    /// Mean of leaf class fractions (random forest).
    Mean,
    /// Sigmoid of base score plus summed leaf values (boosting).
    SigmoidSum { base: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub combine: Combine,
}

impl Forest {
    pub fn score(&self, x: &[f64]) -> f64 {
        match self.combine {
            Combine::Mean => {
                self.trees.iter().map(|t| t.eval(x)).sum::<f64>() / self.trees.len() as f64
            }
            Combine::SigmoidSum { base } => {
                sigmoid_of(base + self.trees.iter().map(|t| t.eval(x)).sum::<f64>())
            }
        }
    }

    /// Per-tree outputs, for bound checks and diagnostics.
    pub fn tree_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.eval(x)).collect()
    }

    pub fn internal_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.root.internal_nodes()).sum()
    }
}

/// How often one named feature is split on, overall and per tree level
/// (level 1 is the root).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureUsage {
    pub feature: FeatureId,
    pub total: u32,
    pub by_level: Vec<u32>,
}

/// Counts internal-node occurrences per named feature (one-hot columns
/// roll up to their feature), sorted by descending total, ties in
/// roster order. Features never split on are omitted.
pub fn feature_usage_histogram(model: &TrainedModel) -> Result<Vec<FeatureUsage>, ModelError> {
    let forest = model.forest()?;
    let max_depth = forest.trees.iter().map(|t| t.root.depth()).max().unwrap_or(0);
    let mut order: Vec<FeatureId> = Vec::new();
    let mut totals: std::collections::HashMap<FeatureId, (u32, Vec<u32>)> =
        std::collections::HashMap::new();
    for feature in FeatureId::roster().chain([FeatureId::HistoryLen]) {
        order.push(feature);
        totals.insert(feature, (0, vec![0; max_depth]));
    }
    for tree in &forest.trees {
        tree.root.visit_splits(0, &mut |column, level| {
            let feature = model
                .schema
                .feature_of_column(column)
                .expect("tree column within schema");
            let entry = totals.get_mut(&feature).expect("known feature");
            entry.0 += 1;
            entry.1[level] += 1;
        });
    }
    let mut usage: Vec<FeatureUsage> = order
        .into_iter()
        .filter_map(|feature| {
            let (total, by_level) = totals.remove(&feature)?;
            (total > 0).then_some(FeatureUsage { feature, total, by_level })
        })
        .collect();
    usage.sort_by_key(|u| std::cmp::Reverse(u.total));
    Ok(usage)
}

/// Human-readable dump of one tree: column names, thresholds, leaves.
pub fn dump_tree(model: &TrainedModel, index: usize) -> Result<String, ModelError> {
    let forest = model.forest()?;
    let tree = forest
        .trees
        .get(index)
        .ok_or_else(|| ModelError::Corrupt(format!("tree index {index} out of range")))?;
    let columns = model.schema.column_names();
    let mut out = format!("tree {index} ({})\n", model.kind);
    fn walk(node: &TreeNode, columns: &[String], indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match node {
            TreeNode::Leaf { value } => out.push_str(&format!("{pad}leaf {value:.6}\n")),
            TreeNode::Split { feature, threshold, left, right } => {
                out.push_str(&format!("{pad}if {} < {threshold:.6}\n", columns[*feature]));
                walk(left, columns, indent + 1, out);
                out.push_str(&format!("{pad}else\n"));
                walk(right, columns, indent + 1, out);
            }
        }
    }
    walk(&tree.root, &columns, 0, &mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Shared training machinery
// ---------------------------------------------------------------------------

/// Per-feature row orderings, sorted once per training set and scanned
/// per node during split search.
pub(crate) struct ColumnIndex {
    /// `cols[f]` lists row indices ascending by `rows[_][f]`.
    pub cols: Vec<Vec<u32>>,
}

impl ColumnIndex {
    pub fn build(rows: &[Vec<f64>], width: usize) -> Self {
        let mut cols = Vec::with_capacity(width);
        for f in 0..width {
            let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
            idx.sort_by(|&a, &b| rows[a as usize][f].total_cmp(&rows[b as usize][f]));
            cols.push(idx);
        }
        ColumnIndex { cols }
    }
}

/// A candidate split: strictly-better gain wins; the scan order
/// (ascending feature, ascending threshold) breaks ties.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub(crate) const MIN_GAIN: f64 = 1e-12;
