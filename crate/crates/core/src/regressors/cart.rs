use serde::{Deserialize, Serialize};

use super::{check_arity, check_training, ModelError, Regressor};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

/// Arena node. Children are indices into [`CartTree::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree grown by greedy variance reduction. A row goes left when
/// `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub n_features: usize,
    pub params: CartParams,
    pub nodes: Vec<TreeNode>,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: CartParams,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    cost: f64,
}

impl CartTree {
    pub fn fit(x: &Matrix, y: &[f64], params: CartParams) -> Result<Self, ModelError> {
        check_training(x, y)?;
        if params.min_leaf == 0 {
            return Err(ModelError::InvalidParameter("min_leaf must be at least 1".into()));
        }
        let mut b = Builder {
            x,
            y,
            params,
            nodes: Vec::new(),
        };
        b.grow((0..x.rows()).collect(), 0);
        Ok(Self {
            n_features: x.cols(),
            params,
            nodes: b.nodes,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        Regressor::predict(self, x)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

impl Regressor for CartTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_arity(self.n_features, x.cols())?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

impl Builder<'_> {
    /// Returns the arena index of the subtree root. `indices` is ascending.
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: 0.0,
            samples: 0,
        });

        let split = if depth >= self.params.max_depth
            || indices.len() < 2 * self.params.min_leaf
            || self.is_pure(&indices)
        {
            None
        } else {
            self.best_split(&indices)
        };

        match split {
            None => {
                self.nodes[slot] = TreeNode::Leaf {
                    value: self.mean(&indices),
                    samples: indices.len(),
                };
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| self.x.get(i, s.feature) <= s.threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }

    fn is_pure(&self, indices: &[usize]) -> bool {
        let first = self.y[indices[0]];
        indices.iter().all(|&i| self.y[i] == first)
    }

    fn mean(&self, indices: &[usize]) -> f64 {
        if self.is_pure(indices) {
            return self.y[indices[0]];
        }
        indices.iter().map(|&i| self.y[i]).sum::<f64>() / indices.len() as f64
    }

    /// Exhaustive search over features and midpoints between consecutive
    /// distinct values. Children must hold `min_leaf` rows. Ties keep the
    /// lowest feature, then the lowest threshold.
    fn best_split(&self, indices: &[usize]) -> Option<BestSplit> {
        let n = indices.len();
        let min_leaf = self.params.min_leaf;
        // centre the targets so the running sums of squares stay well conditioned
        let centre = self.mean(indices);
        let mut best: Option<BestSplit> = None;
        let mut order = indices.to_vec();

        for feature in 0..self.x.cols() {
            order.sort_by(|&a, &b| {
                self.x
                    .get(a, feature)
                    .total_cmp(&self.x.get(b, feature))
                    .then(a.cmp(&b))
            });
            let total: f64 = order.iter().map(|&i| self.y[i] - centre).sum();
            let total_sq: f64 = order.iter().map(|&i| (self.y[i] - centre).powi(2)).sum();
            let (mut s, mut q) = (0.0, 0.0);
            for k in 1..n {
                let d = self.y[order[k - 1]] - centre;
                s += d;
                q += d * d;
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.x.get(order[k - 1], feature);
                let hi = self.x.get(order[k], feature);
                if lo >= hi {
                    continue;
                }
                let (kl, kr) = (k as f64, (n - k) as f64);
                let cost = (q - s * s / kl) + ((total_sq - q) - (total - s).powi(2) / kr);
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(BestSplit {
                        feature,
                        threshold: split_threshold(lo, hi),
                        cost,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of two adjacent distinct values, falling back to the lower value
/// when the midpoint rounds onto the upper one.
pub(crate) fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + 0.5 * (hi - lo);
    if mid >= hi {
        lo
    } else {
        mid
    }
}
