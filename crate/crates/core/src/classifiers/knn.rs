use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::labels::{FaultLabelSet, FaultType};

/// Multi-label k-nearest-neighbours by binary relevance: one neighbour set,
/// one majority vote per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<FaultLabelSet>,
}

impl KnnModel {
    pub fn fit(
        points: Vec<Vec<f64>>,
        labels: Vec<FaultLabelSet>,
        k: usize,
    ) -> Result<Self, ClassifierError> {
        if k < 1 {
            return Err(ClassifierError::InvalidParams("k must be >= 1".into()));
        }
        if points.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        if points.len() != labels.len() {
            return Err(ClassifierError::InvalidParams(
                "points and labels differ in length".into(),
            ));
        }
        let dim = points[0].len();
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(KnnModel { k, points, labels })
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    /// Indices of the nearest training points, closest first; distance ties go
    /// to the lower training index.
    pub fn neighbours(&self, x: &[f64]) -> Result<Vec<usize>, ClassifierError> {
        let dim = self.dim().ok_or(ClassifierError::ModelNotFitted)?;
        if x.len() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let k = self.k.min(scored.len());
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
    }

    /// A label is predicted when strictly more than half of the k neighbours carry it.
    pub fn predict(&self, x: &[f64]) -> Result<FaultLabelSet, ClassifierError> {
        let nn = self.neighbours(x)?;
        let k = nn.len();
        let mut out = FaultLabelSet::empty();
        for ty in FaultType::ALL {
            let votes = nn.iter().filter(|&&i| self.labels[i].contains(ty)).count();
            if 2 * votes > k {
                out.insert(ty);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &str) -> FaultLabelSet {
        s.parse().unwrap()
    }

    #[test]
    fn k1_recovers_training_labels() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![set("lr"), set("act,epoch"), set("")];
        let m = KnnModel::fit(points.clone(), labels.clone(), 1).unwrap();
        for (p, l) in points.iter().zip(&labels) {
            assert_eq!(m.predict(p).unwrap(), *l);
        }
    }

    #[test]
    fn majority_of_three() {
        let points = vec![vec![0.0], vec![0.1], vec![0.25], vec![5.0]];
        let labels = vec![set("lr"), set("lr"), set("loss"), set("loss")];
        let m = KnnModel::fit(points, labels, 3).unwrap();
        assert_eq!(m.predict(&[0.05]).unwrap(), set("lr"));
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let points = vec![vec![1.0], vec![-1.0]];
        let labels = vec![set("lr"), set("loss")];
        let m = KnnModel::fit(points, labels, 1).unwrap();
        assert_eq!(m.neighbours(&[0.0]).unwrap(), vec![0]);
        assert_eq!(m.predict(&[0.0]).unwrap(), set("lr"));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            KnnModel::fit(vec![vec![0.0]], vec![set("")], 0),
            Err(ClassifierError::InvalidParams(_))
        ));
        assert!(matches!(
            KnnModel::fit(vec![], vec![], 3),
            Err(ClassifierError::EmptyDataset)
        ));
        let m = KnnModel::fit(vec![vec![0.0, 1.0]], vec![set("")], 1).unwrap();
        assert!(matches!(
            m.predict(&[0.0]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
        let empty = KnnModel {
            k: 1,
            points: vec![],
            labels: vec![],
        };
        assert!(matches!(
            empty.predict(&[0.0]),
            Err(ClassifierError::ModelNotFitted)
        ));
    }
}
