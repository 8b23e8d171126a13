use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Problem, TreeParams};
use super::{derive_seed, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means round(sqrt(dim)).
    pub max_features: Option<usize>,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_features: None,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededTree {
    pub seed: u64,
    pub tree: DecisionTree,
}

/// Bagged trees for one binary target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<SeededTree>,
}

impl RandomForest {
    /// Each tree gets its own RNG stream seeded from `(seed, tree index)`, so
    /// the result does not depend on how trees are scheduled across threads.
    pub fn fit(
        rows: &[Vec<f64>],
        targets: &[bool],
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        if params.n_trees < 1 {
            return Err(ClassifierError::InvalidParams("n_trees must be >= 1".into()));
        }
        if rows.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        if rows.len() != targets.len() {
            return Err(ClassifierError::InvalidParams(
                "rows and targets differ in length".into(),
            ));
        }
        let dim = rows[0].len();
        let max_features = params
            .max_features
            .unwrap_or_else(|| ((dim as f64).sqrt().round() as usize).max(1));
        if max_features < 1 {
            return Err(ClassifierError::InvalidParams("max_features must be >= 1".into()));
        }
        let problem = Problem { rows, targets };
        let n = rows.len();

        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = derive_seed(seed, t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let tree = DecisionTree::fit_indices(
                    &problem,
                    &bootstrap,
                    &params.tree,
                    Some(max_features),
                    &mut rng,
                )?;
                Ok(SeededTree {
                    seed: tree_seed,
                    tree,
                })
            })
            .collect::<Result<Vec<_>, ClassifierError>>()?;
        Ok(RandomForest { trees })
    }

    pub fn positive_votes(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        if self.trees.is_empty() {
            return Err(ClassifierError::ModelNotFitted);
        }
        let mut votes = 0;
        for t in &self.trees {
            if t.tree.predict(x)? {
                votes += 1;
            }
        }
        Ok(votes)
    }

    /// Majority of trees; an exact tie counts as positive.
    pub fn predict(&self, x: &[f64]) -> Result<bool, ClassifierError> {
        Ok(2 * self.positive_votes(x)? >= self.trees.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<Vec<f64>>, Vec<bool>) {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = i as f64 / 40.0;
                vec![x, (i * 7 % 13) as f64, 1.0 - x, (i % 3) as f64]
            })
            .collect();
        let targets = rows.iter().map(|r| r[0] > 0.45).collect();
        (rows, targets)
    }

    #[test]
    fn same_seed_same_forest() {
        let (rows, targets) = fixture();
        let params = ForestParams {
            n_trees: 10,
            max_features: Some(2),
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&rows, &targets, &params, 42).unwrap();
        let b = RandomForest::fit(&rows, &targets, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = RandomForest::fit(&rows, &targets, &params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn learns_threshold_concept() {
        let (rows, targets) = fixture();
        let f = RandomForest::fit(&rows, &targets, &ForestParams::default(), 7).unwrap();
        let correct = rows
            .iter()
            .zip(&targets)
            .filter(|(r, t)| f.predict(r).unwrap() == **t)
            .count();
        assert!(correct >= 38, "{correct}/40");
    }

    #[test]
    fn zero_trees_rejected() {
        let (rows, targets) = fixture();
        let params = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(matches!(
            RandomForest::fit(&rows, &targets, &params, 1),
            Err(ClassifierError::InvalidParams(_))
        ));
    }
}
