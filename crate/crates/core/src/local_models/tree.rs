use serde_json::{json, Value};

use super::LocalData;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
        value: f64,
    },
}

/// CART regression tree grown greedily on variance reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSurrogate {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Impurity-decrease importances, summing to 1 unless the tree is a single leaf.
    pub importances: Vec<f64>,
    /// No admissible split was found.
    pub single_leaf: bool,
}

impl TreeSurrogate {
    pub fn constant(value: f64, dim: usize, max_depth: usize, min_samples_leaf: usize) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value, samples: 0 }],
            max_depth,
            min_samples_leaf,
            importances: vec![0.0; dim],
            single_leaf: true,
        }
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self.nodes[at]
        {
            at = if x[feature] <= threshold { left } else { right };
        }
        at
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    /// Rules met by `x` from the root down, e.g. `"petal_width > 1.65"`.
    pub fn decision_path(&self, x: &[f64], names: &[String]) -> Vec<String> {
        let mut rules = Vec::new();
        let mut at = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self.nodes[at]
        {
            let name = names.get(feature).cloned().unwrap_or_else(|| format!("f{feature}"));
            if x[feature] <= threshold {
                rules.push(format!("{name} <= {threshold}"));
                at = left;
            } else {
                rules.push(format!("{name} > {threshold}"));
                at = right;
            }
        }
        rules
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn to_json(&self, names: &[String]) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| match n {
                TreeNode::Leaf { value, samples } => json!({"leaf": value, "samples": samples}),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    samples,
                    value,
                } => json!({
                    "feature": names.get(*feature).cloned().unwrap_or_else(|| format!("f{feature}")),
                    "threshold": threshold,
                    "left": left,
                    "right": right,
                    "samples": samples,
                    "value": value,
                }),
            })
            .collect();
        let importances: serde_json::Map<_, _> = names
            .iter()
            .cloned()
            .zip(self.importances.iter().map(|&v| json!(v)))
            .collect();
        json!({
            "kind": "tree",
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "single_leaf": self.single_leaf,
            "importances": importances,
            "nodes": nodes,
        })
    }
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
    gains: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Builder<'_> {
    fn mean_and_sse(&self, idx: &[usize]) -> (f64, f64) {
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| self.ys[i]).sum::<f64>() / n;
        let sse = idx.iter().map(|&i| (self.ys[i] - mean).powi(2)).sum::<f64>();
        (mean, sse)
    }

    fn best_split(&self, idx: &[usize], mean: f64, sse: f64) -> Option<BestSplit> {
        let n = idx.len();
        let d = self.xs[idx[0]].len();
        let mut best: Option<(usize, f64, f64, usize)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..d {
            sorted.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            // Prefix sums over targets centred on the node mean.
            let total: f64 = sorted.iter().map(|&i| self.ys[i] - mean).sum();
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.ys[sorted[k]] - mean;
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (self.xs[sorted[k]][f], self.xs[sorted[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                    - total * total / n as f64;
                if best.is_none_or(|(_, _, g, _)| gain > g) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((f, threshold, gain, n_left));
                }
            }
        }
        let (feature, threshold, gain, _) = best?;
        if !(gain > sse * 1e-12) || gain <= 0.0 {
            return None;
        }
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        Some(BestSplit {
            feature,
            threshold,
            gain,
            left,
            right,
        })
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (mean, sse) = self.mean_and_sse(&idx);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: mean,
            samples: idx.len(),
        });
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf || sse <= 0.0 {
            return at;
        }
        let Some(split) = self.best_split(&idx, mean, sse) else {
            return at;
        };
        self.gains[split.feature] += split.gain;
        let samples = idx.len();
        drop(idx);
        let left = self.grow(split.left, depth + 1);
        let right = self.grow(split.right, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            samples,
            value: mean,
        };
        at
    }
}

/// Fits a regression tree; `α` is the normalised impurity decrease per feature.
pub fn tree_fit(data: &LocalData, max_depth: usize, min_samples_leaf: usize) -> Result<TreeSurrogate> {
    data.validate()?;
    if min_samples_leaf == 0 {
        return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
    }
    if data.len() < 2 * min_samples_leaf {
        return Err(Error::InvalidParameter(format!(
            "tree needs at least {} samples, got {}",
            2 * min_samples_leaf,
            data.len()
        )));
    }
    let mut builder = Builder {
        xs: &data.xs,
        ys: &data.ys,
        max_depth,
        min_leaf: min_samples_leaf,
        nodes: Vec::new(),
        gains: vec![0.0; data.dim()],
    };
    builder.grow((0..data.len()).collect(), 0);
    let total: f64 = builder.gains.iter().sum();
    let single_leaf = builder.nodes.len() == 1;
    let importances = if total > 0.0 {
        builder.gains.iter().map(|g| g / total).collect()
    } else {
        vec![0.0; data.dim()]
    };
    Ok(TreeSurrogate {
        nodes: builder.nodes,
        max_depth,
        min_samples_leaf,
        importances,
        single_leaf,
    })
}
