//! Multi-label fault diagnosers: k-nearest neighbours, decision tree and
//! random forest, each by binary relevance (one binary problem per fault
//! type), plus union ensembling across models and repeated runs.

mod forest;
mod knn;
mod tree;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{fit_normalizer, FeatureError, FeatureVector, NormParams};
use crate::labels::{FaultLabelSet, FaultType};

pub use forest::{ForestParams, RandomForest, SeededTree};
pub use knn::KnnModel;
pub use tree::{DecisionTree, Node, TreeParams};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model is not fitted")]
    ModelNotFitted,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// SplitMix64 finalizer over `base` offset by `stream`; gives independent
/// child seeds for per-label and per-tree RNG streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded shuffle of `0..n` split into (train, held-out) index lists, with
/// `round(n * train_fraction)` training indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize).min(n);
    let held_out = idx.split_off(cut);
    (idx, held_out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub labels: FaultLabelSet,
    pub origin_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Tree,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k: usize,
    pub tree: TreeParams,
    pub forest: ForestParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 5,
            tree: TreeParams::default(),
            forest: ForestParams::default(),
        }
    }
}

/// One binary tree per fault type, in [`FaultType::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiLabelTree(pub Vec<DecisionTree>);

/// One forest per fault type, in [`FaultType::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiLabelForest(pub Vec<RandomForest>);

impl MultiLabelTree {
    pub fn predict(&self, x: &[f64]) -> Result<FaultLabelSet, ClassifierError> {
        predict_per_label(self.0.len(), |i| self.0[i].predict(x))
    }
}

impl MultiLabelForest {
    pub fn predict(&self, x: &[f64]) -> Result<FaultLabelSet, ClassifierError> {
        predict_per_label(self.0.len(), |i| self.0[i].predict(x))
    }
}

fn predict_per_label(
    models: usize,
    mut f: impl FnMut(usize) -> Result<bool, ClassifierError>,
) -> Result<FaultLabelSet, ClassifierError> {
    if models != FaultType::ALL.len() {
        return Err(ClassifierError::ModelNotFitted);
    }
    let mut out = FaultLabelSet::empty();
    for ty in FaultType::ALL {
        if f(ty.index())? {
            out.insert(ty);
        }
    }
    Ok(out)
}

/// A fitted model of any of the three algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum SubModel {
    Knn(KnnModel),
    Tree(MultiLabelTree),
    Forest(MultiLabelForest),
}

impl SubModel {
    pub fn predict(&self, x: &[f64]) -> Result<FaultLabelSet, ClassifierError> {
        match self {
            SubModel::Knn(m) => m.predict(x),
            SubModel::Tree(m) => m.predict(x),
            SubModel::Forest(m) => m.predict(x),
        }
    }
}

fn split_rows(data: &[LabeledSample]) -> Result<(Vec<Vec<f64>>, Vec<FaultLabelSet>), ClassifierError> {
    let first = data.first().ok_or(ClassifierError::EmptyDataset)?;
    let dim = first.features.len();
    let mut rows = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for s in data {
        if s.features.len() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: s.features.len(),
            });
        }
        rows.push(s.features.0.clone());
        labels.push(s.labels);
    }
    Ok((rows, labels))
}

fn fit_rows(
    algorithm: Algorithm,
    rows: Vec<Vec<f64>>,
    labels: Vec<FaultLabelSet>,
    config: &TrainConfig,
    seed: u64,
) -> Result<SubModel, ClassifierError> {
    match algorithm {
        Algorithm::Knn => Ok(SubModel::Knn(KnnModel::fit(rows, labels, config.k)?)),
        Algorithm::Tree => {
            let trees = FaultType::ALL
                .iter()
                .map(|ty| {
                    let targets: Vec<bool> = labels.iter().map(|l| l.contains(*ty)).collect();
                    DecisionTree::fit(&rows, &targets, &config.tree)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SubModel::Tree(MultiLabelTree(trees)))
        }
        Algorithm::Forest => {
            let forests = FaultType::ALL
                .iter()
                .map(|ty| {
                    let targets: Vec<bool> = labels.iter().map(|l| l.contains(*ty)).collect();
                    let label_seed = derive_seed(seed, ty.index() as u64);
                    RandomForest::fit(&rows, &targets, &config.forest, label_seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SubModel::Forest(MultiLabelForest(forests)))
        }
    }
}

/// Fits one algorithm on the samples as given (no normalization).
pub fn fit(
    algorithm: Algorithm,
    data: &[LabeledSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<SubModel, ClassifierError> {
    let (rows, labels) = split_rows(data)?;
    fit_rows(algorithm, rows, labels, config, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
    pub config: TrainConfig,
    pub seed: u64,
    pub training_samples: usize,
}

/// The three trained diagnosers with the normalizer they share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoserBundle {
    pub version: u32,
    pub norm: NormParams,
    pub knn: KnnModel,
    pub tree: MultiLabelTree,
    pub forest: MultiLabelForest,
    pub metadata: BundleMetadata,
}

/// Predictions of the three models for one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub knn: FaultLabelSet,
    pub tree: FaultLabelSet,
    pub forest: FaultLabelSet,
}

impl ModelPredictions {
    pub fn union(&self) -> FaultLabelSet {
        self.knn.union(self.tree).union(self.forest)
    }
}

impl DiagnoserBundle {
    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<ModelPredictions, ClassifierError> {
        if x.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let z = self.norm.normalize(x.as_slice())?;
        Ok(ModelPredictions {
            knn: self.knn.predict(&z)?,
            tree: self.tree.predict(&z)?,
            forest: self.forest.predict(&z)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BundleLoadError> {
        let bundle: DiagnoserBundle = serde_json::from_str(text)?;
        if bundle.version != BUNDLE_VERSION {
            return Err(ClassifierError::UnsupportedVersion(bundle.version).into());
        }
        Ok(bundle)
    }
}

#[derive(Debug, Error)]
pub enum BundleLoadError {
    #[error("malformed bundle JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Normalizes features, then fits KNN, tree and forest on the same rows.
pub fn train_diagnosers(
    data: &[LabeledSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<DiagnoserBundle, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if data.len() < 2 {
        return Err(ClassifierError::InsufficientData(
            "at least 2 samples are required".into(),
        ));
    }
    let any_positive = data.iter().any(|s| !s.labels.is_empty());
    let any_negative = data.iter().any(|s| s.labels != FaultLabelSet::all());
    if !any_positive || !any_negative {
        return Err(ClassifierError::InsufficientData(
            "need at least one positive and one negative label".into(),
        ));
    }

    let (rows, labels) = split_rows(data)?;
    let norm = fit_normalizer(&rows)?;
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| norm.normalize(r))
        .collect::<Result<_, _>>()?;

    let SubModel::Knn(knn) = fit_rows(Algorithm::Knn, rows.clone(), labels.clone(), config, seed)? else {
        unreachable!()
    };
    let SubModel::Tree(tree) = fit_rows(Algorithm::Tree, rows.clone(), labels.clone(), config, seed)? else {
        unreachable!()
    };
    let SubModel::Forest(forest) = fit_rows(Algorithm::Forest, rows, labels, config, seed)? else {
        unreachable!()
    };

    Ok(DiagnoserBundle {
        version: BUNDLE_VERSION,
        norm,
        knn,
        tree,
        forest,
        metadata: BundleMetadata {
            trained_at: None,
            config: *config,
            seed,
            training_samples: data.len(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    /// Per-run predictions of each model, in input order.
    pub runs: Vec<ModelPredictions>,
    /// Union over runs and models.
    #[serde(rename = "final")]
    pub final_labels: FaultLabelSet,
    /// For each fault type, how many (run, model) predictions contained it.
    pub votes: BTreeMap<FaultType, usize>,
    /// Number of (run, model) predictions behind `votes`.
    pub predictions: usize,
}

/// Predicts with every model on every run and unions the labels.
pub fn diagnose(
    bundle: &DiagnoserBundle,
    runs: &[FeatureVector],
) -> Result<DiagnosisReport, ClassifierError> {
    if runs.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let per_run = runs
        .iter()
        .map(|x| bundle.predict(x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut final_labels = FaultLabelSet::empty();
    let mut votes: BTreeMap<FaultType, usize> = FaultType::ALL.iter().map(|t| (*t, 0)).collect();
    for p in &per_run {
        final_labels = final_labels.union(p.union());
        for set in [p.knn, p.tree, p.forest] {
            for ty in set.iter() {
                *votes.entry(ty).or_default() += 1;
            }
        }
    }
    Ok(DiagnosisReport {
        predictions: per_run.len() * 3,
        runs: per_run,
        final_labels,
        votes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// `None` when there were no positives.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub samples: usize,
    pub exact_match_accuracy: f64,
    /// Share of samples where at least one true fault was predicted; samples
    /// without faults count when the prediction is empty too.
    pub any_overlap_accuracy: f64,
    pub per_label: BTreeMap<FaultType, LabelMetrics>,
}

/// Scores predicted label sets against the truth. Panics if lengths differ.
pub fn score(predicted: &[FaultLabelSet], truth: &[FaultLabelSet]) -> Result<Metrics, ClassifierError> {
    assert_eq!(predicted.len(), truth.len(), "prediction/truth length mismatch");
    if truth.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let n = truth.len();
    let mut exact = 0;
    let mut overlap = 0;
    for (p, t) in predicted.iter().zip(truth) {
        if p == t {
            exact += 1;
        }
        let hit = if t.is_empty() {
            p.is_empty()
        } else {
            !p.intersection(*t).is_empty()
        };
        if hit {
            overlap += 1;
        }
    }
    let per_label = FaultType::ALL
        .iter()
        .map(|&ty| {
            let mut tp = 0;
            let mut fp = 0;
            let mut fneg = 0;
            for (p, t) in predicted.iter().zip(truth) {
                match (p.contains(ty), t.contains(ty)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    (false, false) => {}
                }
            }
            let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
            (
                ty,
                LabelMetrics {
                    true_positives: tp,
                    false_positives: fp,
                    false_negatives: fneg,
                    precision: ratio(tp, tp + fp),
                    recall: ratio(tp, tp + fneg),
                },
            )
        })
        .collect();
    Ok(Metrics {
        samples: n,
        exact_match_accuracy: exact as f64 / n as f64,
        any_overlap_accuracy: overlap as f64 / n as f64,
        per_label,
    })
}

/// Held-out metrics for the union ensemble and for each model alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub ensemble: Metrics,
    pub knn: Metrics,
    pub tree: Metrics,
    pub forest: Metrics,
}

pub fn evaluate(
    bundle: &DiagnoserBundle,
    held_out: &[LabeledSample],
) -> Result<EvaluationReport, ClassifierError> {
    if held_out.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let preds = held_out
        .iter()
        .map(|s| bundle.predict(&s.features))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<FaultLabelSet> = held_out.iter().map(|s| s.labels).collect();
    let pick = |f: fn(&ModelPredictions) -> FaultLabelSet| -> Vec<FaultLabelSet> {
        preds.iter().map(f).collect()
    };
    Ok(EvaluationReport {
        ensemble: score(&pick(ModelPredictions::union), &truth)?,
        knn: score(&pick(|p| p.knn), &truth)?,
        tree: score(&pick(|p| p.tree), &truth)?,
        forest: score(&pick(|p| p.forest), &truth)?,
    })
}
