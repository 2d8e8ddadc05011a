use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{clamp_prob, sigmoid, FittedModel, ModelState, TrainingMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    #[serde(default = "GbtParams::default_tree_count")]
    pub tree_count: usize,
    #[serde(default = "GbtParams::default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "GbtParams::default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "GbtParams::default_min_leaf")]
    pub min_leaf: usize,
}

impl GbtParams {
    fn default_tree_count() -> usize {
        100
    }
    fn default_max_depth() -> usize {
        3
    }
    fn default_learning_rate() -> f64 {
        0.1
    }
    fn default_min_leaf() -> usize {
        10
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLearner(m));
        if self.tree_count < 1 {
            return bad("gbt tree_count must be >= 1".into());
        }
        if !(1..=8).contains(&self.max_depth) {
            return bad(format!("gbt max_depth must be in 1..=8, got {}", self.max_depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "gbt learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if self.min_leaf < 1 {
            return bad("gbt min_leaf must be >= 1".into());
        }
        Ok(())
    }
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            tree_count: Self::default_tree_count(),
            max_depth: Self::default_max_depth(),
            learning_rate: Self::default_learning_rate(),
            min_leaf: Self::default_min_leaf(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

const MIN_GAIN: f64 = 1e-12;

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<Node>,
    /// Leaf value reached by each training row, filled during the build.
    leaf_value: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    /// `sorted[j]` holds this node's rows ordered by feature `j` (ties by row index).
    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));

        let split = if depth < self.params.max_depth && n >= 2 * self.params.min_leaf {
            self.best_split(&sorted)
        } else {
            None
        };
        let Some(split) = split else {
            let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
            let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
            let value = if h > 1e-150 { g / h } else { 0.0 };
            for &i in rows {
                self.leaf_value[i] = value;
            }
            self.nodes[id] = Node::Leaf(value);
            return id;
        };

        let goes_left: Vec<bool> = {
            let mut mask = vec![false; self.x.nrows()];
            for &i in rows {
                mask[i] = self.x[[i, split.feature]] <= split.threshold;
            }
            mask
        };
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&i| goes_left[i]);
            left.push(l);
            right.push(r);
        }
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Exact least-squares split on the gradient, scanning every boundary between
    /// distinct sorted values. Ties keep the lowest feature, then the lowest threshold.
    fn best_split(&self, sorted: &[Vec<usize>]) -> Option<BestSplit> {
        let n = sorted[0].len();
        let total: f64 = sorted[0].iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / n as f64;
        let min_leaf = self.params.min_leaf;
        let mut best: Option<BestSplit> = None;
        for (feature, list) in sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = list[k];
                left_sum += self.grad[i];
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let cur = self.x[[i, feature]];
                let next = self.x[[list[k + 1], feature]];
                if next <= cur {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = cur + (next - cur) / 2.0;
                    if threshold >= next {
                        threshold = cur;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// Gradient boosting on logistic loss. Each stage grows a least-squares regression
/// tree on the negative gradient `y − p`; leaves take the Newton step
/// `Σ(y − p) / Σ p(1 − p)`, shrunk by the learning rate.
pub(super) fn fit_gbt(x: ArrayView2<f64>, y: &[u8], params: &GbtParams) -> Result<FittedModel> {
    let (n, p) = x.dim();
    if n < 2 * params.min_leaf {
        return Err(Error::FitFailed(format!(
            "gbt needs at least 2 * min_leaf = {} rows, got {n}",
            2 * params.min_leaf
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("design matrix has non-finite values".into()));
    }
    let mean = clamp_prob(y.iter().map(|&v| v as f64).sum::<f64>() / n as f64);
    let init = (mean / (1.0 - mean)).ln();
    let positives = y.iter().filter(|&&v| v == 1).count();
    let mut trees = Vec::new();

    if positives > 0 && positives < n && p > 0 {
        let presorted: Vec<Vec<usize>> = (0..p)
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut score = vec![init; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..params.tree_count {
            for i in 0..n {
                let prob = sigmoid(score[i]);
                grad[i] = y[i] as f64 - prob;
                hess[i] = prob * (1.0 - prob);
            }
            let mut builder = Builder {
                x,
                grad: &grad,
                hess: &hess,
                params,
                nodes: Vec::new(),
                leaf_value: vec![0.0; n],
            };
            builder.build(presorted.clone(), 0);
            for (s, v) in score.iter_mut().zip(&builder.leaf_value) {
                *s += params.learning_rate * v;
            }
            trees.push(Tree {
                nodes: builder.nodes,
            });
        }
    }

    Ok(FittedModel {
        meta: TrainingMeta {
            iterations: trees.len(),
            converged: true,
        },
        state: ModelState::Boosted {
            init,
            learning_rate: params.learning_rate,
            trees,
        },
        feature_count: p,
    })
}
