//! Binary CART trees with Gini impurity.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_samples_split: 2,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.min_samples_split < 2 {
            return Err(ClassifierError::InvalidParams(
                "min_samples_split must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// One node of a flattened tree. Split nodes send `x[feature] <= threshold`
/// to `left`; leaves have `feature == None` and carry the positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub leaf_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// Training view: rows of features with one binary target.
pub(crate) struct Problem<'a> {
    pub rows: &'a [Vec<f64>],
    pub targets: &'a [bool],
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl DecisionTree {
    /// Fits on `indices` (which may repeat, for bootstrap samples). When
    /// `max_features` is set, each split considers that many features drawn
    /// from `rng` without replacement.
    pub(crate) fn fit_indices<R: Rng>(
        problem: &Problem<'_>,
        indices: &[usize],
        params: &TreeParams,
        max_features: Option<usize>,
        rng: &mut R,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        if indices.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        let mut tree = DecisionTree { nodes: Vec::new() };
        let mut builder = Builder {
            problem,
            params,
            max_features,
            rng,
        };
        builder.grow(&mut tree, indices.to_vec(), 0);
        Ok(tree)
    }

    pub fn fit(rows: &[Vec<f64>], targets: &[bool], params: &TreeParams) -> Result<Self, ClassifierError> {
        if rows.len() != targets.len() {
            return Err(ClassifierError::InvalidParams(
                "rows and targets differ in length".into(),
            ));
        }
        let indices: Vec<usize> = (0..rows.len()).collect();
        // No feature sampling, so the RNG is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Self::fit_indices(&Problem { rows, targets }, &indices, params, None, &mut rng)
    }

    pub fn leaf_value(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        let mut i = 0;
        loop {
            let node = self.nodes.get(i).ok_or(ClassifierError::ModelNotFitted)?;
            match node.feature {
                None => return Ok(node.leaf_value),
                Some(f) => {
                    let v = *x.get(f).ok_or(ClassifierError::DimensionMismatch {
                        expected: f + 1,
                        found: x.len(),
                    })?;
                    i = if v <= node.threshold { node.left } else { node.right };
                }
            }
        }
    }

    /// Positive when the leaf's positive fraction is at least one half.
    pub fn predict(&self, x: &[f64]) -> Result<bool, ClassifierError> {
        Ok(self.leaf_value(x)? >= 0.5)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i].feature {
                None => 0,
                Some(_) => 1 + walk(nodes, nodes[i].left).max(walk(nodes, nodes[i].right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }
}

struct Builder<'a, 'p, R> {
    problem: &'a Problem<'p>,
    params: &'a TreeParams,
    max_features: Option<usize>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, '_, R> {
    fn grow(&mut self, tree: &mut DecisionTree, indices: Vec<usize>, depth: usize) -> usize {
        let n = indices.len();
        let pos = indices.iter().filter(|&&i| self.problem.targets[i]).count();
        let id = tree.nodes.len();
        tree.nodes.push(Node {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            leaf_value: pos as f64 / n as f64,
        });

        if pos == 0 || pos == n || depth >= self.params.max_depth || n < self.params.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(&indices, pos) else {
            return id;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.problem.rows[i][split.feature] <= split.threshold);
        let left_id = self.grow(tree, left, depth + 1);
        let right_id = self.grow(tree, right, depth + 1);
        let node = &mut tree.nodes[id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.left = left_id;
        node.right = right_id;
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let dim = self.problem.rows[0].len();
        match self.max_features {
            Some(m) if m < dim => {
                let mut picked = index::sample(self.rng, dim, m).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..dim).collect(),
        }
    }

    /// Lowest weighted Gini over features and midpoint thresholds. Ties keep
    /// the earlier feature, then the lower threshold.
    fn best_split(&mut self, indices: &[usize], pos: usize) -> Option<Split> {
        let n = indices.len();
        let mut best: Option<Split> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);

        for f in self.candidate_features() {
            column.clear();
            column.extend(
                indices
                    .iter()
                    .map(|&i| (self.problem.rows[i][f], self.problem.targets[i])),
            );
            column.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_n = 0;
            let mut left_pos = 0;
            for w in 0..n - 1 {
                left_n += 1;
                if column[w].1 {
                    left_pos += 1;
                }
                let (lo, hi) = (column[w].0, column[w + 1].0);
                if lo == hi {
                    continue;
                }
                let right_n = n - left_n;
                let right_pos = pos - left_pos;
                let impurity = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(right_pos, right_n))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi || !threshold.is_finite() {
                        threshold = lo;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_single_split() {
        let rows = vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]];
        let targets = vec![false, false, true, true];
        let tree = DecisionTree::fit(&rows, &targets, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 3);
        assert_eq!(tree.nodes[0].feature, Some(0));
        assert_eq!(tree.nodes[0].threshold, 0.5);
        for (r, t) in rows.iter().zip(&targets) {
            assert_eq!(tree.predict(r).unwrap(), *t);
        }
    }

    #[test]
    fn xor_needs_two_levels() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let targets = vec![false, true, true, false];
        let tree = DecisionTree::fit(&rows, &targets, &TreeParams::default()).unwrap();
        assert_eq!(tree.depth(), 2);
        for (r, t) in rows.iter().zip(&targets) {
            assert_eq!(tree.predict(r).unwrap(), *t);
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both features separate the data identically.
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let targets = vec![false, true];
        let tree = DecisionTree::fit(&rows, &targets, &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes[0].feature, Some(0));
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let targets: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let params = TreeParams {
            max_depth: 3,
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&rows, &targets, &params).unwrap();
        assert!(tree.depth() <= 3);
    }

    #[test]
    fn pure_data_is_a_leaf() {
        let rows = vec![vec![0.0], vec![1.0]];
        let tree = DecisionTree::fit(&rows, &[false, false], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert!(!tree.predict(&[0.5]).unwrap());
    }

    #[test]
    fn constant_features_cannot_split() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        let tree = DecisionTree::fit(&rows, &[true, false, true], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert!(tree.predict(&[1.0]).unwrap());
    }
}
