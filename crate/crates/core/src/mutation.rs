//! Declarative model specs, the fault-seeding mutation operators, and
//! iterative multi-fault seeding guarded by the kill check.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::labels::{FaultLabelSet, FaultType};
use crate::stats::{is_kill, AccuracySamples, KillThresholds, KillVerdict, StatsError};

pub const CLASSIFICATION_LOSSES: [&str; 3] = [
    "categorical_crossentropy",
    "sparse_categorical_crossentropy",
    "binary_crossentropy",
];

pub const REGRESSION_LOSSES: [&str; 3] = [
    "mean_absolute_error",
    "mean_absolute_percentage_error",
    "mean_squared_error",
];

pub const ACTIVATIONS: [&str; 9] = [
    "relu", "sigmoid", "softmax", "softplus", "softsign", "tanh", "selu", "elu", "linear",
];

pub const OPTIMIZERS: [&str; 5] = ["SGD", "RMSprop", "Adam", "Adadelta", "Adagrad"];

pub const LR_DECREASE_RANGE: (f64, f64) = (1e-16, 1e-10);
pub const LR_INCREASE_RANGE: (f64, f64) = (1.0, 10.0);
pub const EPOCH_DIVISOR_RANGE: (u64, u64) = (10, 50);

#[derive(Debug, Error, PartialEq)]
pub enum MutationError {
    #[error("unknown loss function `{0}`")]
    UnknownLoss(String),
    #[error("no mutable target for {0:?}")]
    NoMutableTarget(OperatorKind),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("evaluator failed on spec `{spec_id}`: {message}")]
    EvaluatorFailure { spec_id: String, message: String },
    #[error("no mutation operator applies to the base spec")]
    ExhaustedOperators,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossCategory {
    Classification,
    Regression,
}

/// Maps Keras short names (`mse`, `mae`, `mape`) onto the full names.
pub fn canonical_loss_name(name: &str) -> &str {
    match name {
        "mse" | "MSE" => "mean_squared_error",
        "mae" | "MAE" => "mean_absolute_error",
        "mape" | "MAPE" => "mean_absolute_percentage_error",
        other => other,
    }
}

pub fn categorize_loss(name: &str) -> Result<LossCategory, MutationError> {
    let name = canonical_loss_name(name);
    if CLASSIFICATION_LOSSES.contains(&name) {
        Ok(LossCategory::Classification)
    } else if REGRESSION_LOSSES.contains(&name) {
        Ok(LossCategory::Regression)
    } else {
        Err(MutationError::UnknownLoss(name.to_string()))
    }
}

/// Case-insensitive lookup into [`OPTIMIZERS`].
pub fn canonical_optimizer_name(name: &str) -> Option<&'static str> {
    OPTIMIZERS
        .iter()
        .copied()
        .find(|o| o.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSpec {
    pub value: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_line: Option<usize>,
}

/// The trainable configuration of a DL program, anchored to source lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub id: String,
    pub layers: Vec<LayerSpec>,
    pub loss: LossSpec,
    pub optimizer: OptimizerSpec,
    pub epochs: EpochSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<u64>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), MutationError> {
        if self.epochs.value < 1 {
            return Err(MutationError::InvalidSpec("epochs must be >= 1".into()));
        }
        if let Some(lr) = self.optimizer.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(MutationError::InvalidSpec(format!(
                    "learning rate must be positive, got {lr}"
                )));
            }
        }
        if self.batch_size == Some(0) {
            return Err(MutationError::InvalidSpec("batch_size must be >= 1".into()));
        }
        categorize_loss(&self.loss.name)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    LossCrossCategory,
    Activation,
    EpochDecrease,
    Optimizer,
    LrDecrease,
    LrIncrease,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::LossCrossCategory,
        OperatorKind::Activation,
        OperatorKind::EpochDecrease,
        OperatorKind::Optimizer,
        OperatorKind::LrDecrease,
        OperatorKind::LrIncrease,
    ];

    pub fn fault_type(self) -> FaultType {
        match self {
            OperatorKind::LossCrossCategory => FaultType::Loss,
            OperatorKind::Activation => FaultType::Act,
            OperatorKind::EpochDecrease => FaultType::Epoch,
            OperatorKind::Optimizer => FaultType::Optimizer,
            OperatorKind::LrDecrease | OperatorKind::LrIncrease => FaultType::Lr,
        }
    }

    pub fn for_fault(ty: FaultType) -> &'static [OperatorKind] {
        match ty {
            FaultType::Loss => &[OperatorKind::LossCrossCategory],
            FaultType::Act => &[OperatorKind::Activation],
            FaultType::Epoch => &[OperatorKind::EpochDecrease],
            FaultType::Optimizer => &[OperatorKind::Optimizer],
            FaultType::Lr => &[OperatorKind::LrDecrease, OperatorKind::LrIncrease],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub fault_type: FaultType,
    pub operator: OperatorKind,
    pub before: Value,
    pub after: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_line: Option<usize>,
}

/// Ordered seeded faults, at most one per fault type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationPlan {
    pub base_spec_id: String,
    pub records: Vec<FaultRecord>,
    pub rng_seed: u64,
}

impl MutationPlan {
    pub fn fault_types(&self) -> FaultLabelSet {
        self.records.iter().map(|r| r.fault_type).collect()
    }

    /// True when no fault type appears twice.
    pub fn is_well_formed(&self) -> bool {
        self.fault_types().len() == self.records.len()
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let v = rng.random_range(lo.ln()..=hi.ln()).exp();
    v.clamp(lo, hi)
}

fn pick_other<'a, R: Rng + ?Sized>(rng: &mut R, pool: &[&'a str], current: &str) -> &'a str {
    let others: Vec<&'a str> = pool.iter().copied().filter(|p| *p != current).collect();
    others.choose(rng).copied().expect("pool has alternatives")
}

/// Applies one mutation operator, returning the mutated spec and what changed.
pub fn apply_operator<R: Rng + ?Sized>(
    spec: &ModelSpec,
    op: OperatorKind,
    rng: &mut R,
) -> Result<(ModelSpec, FaultRecord), MutationError> {
    let mut out = spec.clone();
    let (before, after, target_line) = match op {
        OperatorKind::LossCrossCategory => {
            let pool = match categorize_loss(&spec.loss.name)? {
                LossCategory::Classification => REGRESSION_LOSSES,
                LossCategory::Regression => CLASSIFICATION_LOSSES,
            };
            let new = *pool.choose(rng).expect("non-empty");
            out.loss.name = new.to_string();
            (
                Value::from(spec.loss.name.clone()),
                Value::from(new),
                spec.loss.source_line,
            )
        }
        OperatorKind::Activation => {
            let candidates: Vec<usize> = spec
                .layers
                .iter()
                .enumerate()
                .filter(|(_, l)| l.activation.is_some())
                .map(|(i, _)| i)
                .collect();
            let &idx = candidates
                .choose(rng)
                .ok_or(MutationError::NoMutableTarget(op))?;
            let current = spec.layers[idx].activation.clone().unwrap_or_default();
            let new = pick_other(rng, &ACTIVATIONS, &current);
            out.layers[idx].activation = Some(new.to_string());
            (
                Value::from(current),
                Value::from(new),
                spec.layers[idx].source_line,
            )
        }
        OperatorKind::EpochDecrease => {
            let original = spec.epochs.value;
            let divisor = rng.random_range(EPOCH_DIVISOR_RANGE.0..=EPOCH_DIVISOR_RANGE.1);
            let new = (original / divisor).max(1);
            if new == original {
                return Err(MutationError::NoMutableTarget(op));
            }
            out.epochs.value = new;
            (Value::from(original), Value::from(new), spec.epochs.source_line)
        }
        OperatorKind::Optimizer => {
            let current = canonical_optimizer_name(&spec.optimizer.name).unwrap_or("");
            let new = pick_other(rng, &OPTIMIZERS, current);
            out.optimizer.name = new.to_string();
            (
                Value::from(spec.optimizer.name.clone()),
                Value::from(new),
                spec.optimizer.source_line,
            )
        }
        OperatorKind::LrDecrease | OperatorKind::LrIncrease => {
            let range = if op == OperatorKind::LrDecrease {
                LR_DECREASE_RANGE
            } else {
                LR_INCREASE_RANGE
            };
            let mut new = log_uniform(rng, range);
            while Some(new) == spec.optimizer.learning_rate {
                new = log_uniform(rng, range);
            }
            out.optimizer.learning_rate = Some(new);
            let before = spec.optimizer.learning_rate.map_or(Value::Null, Value::from);
            (before, Value::from(new), spec.optimizer.source_line)
        }
    };
    Ok((
        out,
        FaultRecord {
            fault_type: op.fault_type(),
            operator: op,
            before,
            after,
            target_line,
        },
    ))
}

/// Seeds up to `max_types` distinct fault types in random order without any
/// kill check. Types whose operator has no target are skipped.
pub fn random_plan<R: Rng + ?Sized>(
    spec: &ModelSpec,
    max_types: usize,
    rng: &mut R,
    rng_seed: u64,
) -> Result<(ModelSpec, MutationPlan), MutationError> {
    let mut types = FaultType::ALL.to_vec();
    types.shuffle(rng);
    let mut current = spec.clone();
    let mut records = Vec::new();
    for ty in types {
        if records.len() >= max_types.min(FaultType::ALL.len()) {
            break;
        }
        let op = *OperatorKind::for_fault(ty).choose(rng).expect("non-empty");
        match apply_operator(&current, op, rng) {
            Ok((next, record)) => {
                current = next;
                records.push(record);
            }
            Err(MutationError::NoMutableTarget(_)) | Err(MutationError::UnknownLoss(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(MutationError::ExhaustedOperators);
    }
    Ok((
        current,
        MutationPlan {
            base_spec_id: spec.id.clone(),
            records,
            rng_seed,
        },
    ))
}

/// Source of accuracy samples for a spec: trains it `repetitions` times and
/// reports the test accuracies.
pub trait Evaluator {
    fn evaluate(&mut self, spec: &ModelSpec, repetitions: usize) -> Result<AccuracySamples, String>;
}

impl<F> Evaluator for F
where
    F: FnMut(&ModelSpec, usize) -> Result<AccuracySamples, String>,
{
    fn evaluate(&mut self, spec: &ModelSpec, repetitions: usize) -> Result<AccuracySamples, String> {
        self(spec, repetitions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedingConfig {
    pub max_types: usize,
    pub repetitions: usize,
    pub retries_per_type: usize,
    pub thresholds: KillThresholds,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig {
            max_types: 5,
            repetitions: 20,
            retries_per_type: 3,
            thresholds: KillThresholds::default(),
        }
    }
}

/// A kill-confirmed mutant. `plan.records[i]` was confirmed by `verdicts[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMutant {
    pub spec: ModelSpec,
    pub labels: FaultLabelSet,
    pub plan: MutationPlan,
    pub verdicts: Vec<KillVerdict>,
}

impl LabeledMutant {
    /// Labels equal the plan's fault types and every step was killed.
    pub fn is_consistent(&self) -> bool {
        self.plan.records.len() == self.verdicts.len()
            && self.verdicts.iter().all(|v| v.killed)
            && self.plan.fault_types() == self.labels
            && self.plan.is_well_formed()
    }
}

/// Stacks faults one type at a time. Each candidate is kept only if the kill
/// check against the original spec's accuracies passes; otherwise it is
/// discarded and retried with fresh parameters up to `retries_per_type`
/// times before moving to the next type. Returns every confirmed mutant
/// along the chain.
pub fn seed_iteratively<E: Evaluator + ?Sized, R: Rng + ?Sized>(
    spec: &ModelSpec,
    evaluator: &mut E,
    rng: &mut R,
    rng_seed: u64,
    config: &SeedingConfig,
) -> Result<Vec<LabeledMutant>, MutationError> {
    let evaluate = |evaluator: &mut E, s: &ModelSpec| {
        evaluator
            .evaluate(s, config.repetitions)
            .map_err(|message| MutationError::EvaluatorFailure {
                spec_id: s.id.clone(),
                message,
            })
    };

    let max_types = config.max_types.min(FaultType::ALL.len());
    let mut types = FaultType::ALL.to_vec();
    types.shuffle(rng);

    let baseline = evaluate(evaluator, spec)?;
    let mut current = spec.clone();
    let mut records: Vec<FaultRecord> = Vec::new();
    let mut verdicts: Vec<KillVerdict> = Vec::new();
    let mut mutants = Vec::new();
    let mut any_applied = false;

    for ty in types {
        if records.len() >= max_types {
            break;
        }
        for _ in 0..config.retries_per_type.max(1) {
            let op = *OperatorKind::for_fault(ty).choose(rng).expect("non-empty");
            let (candidate, record) = match apply_operator(&current, op, rng) {
                Ok(pair) => pair,
                Err(MutationError::NoMutableTarget(_)) | Err(MutationError::UnknownLoss(_)) => {
                    continue
                }
                Err(e) => return Err(e),
            };
            any_applied = true;
            let mut candidate = candidate;
            candidate.id = format!("{}-m{}", spec.id, records.len() + 1);
            let samples = evaluate(evaluator, &candidate)?;
            let verdict = is_kill(
                &baseline,
                &samples,
                config.thresholds.alpha,
                config.thresholds.beta,
            )?;
            if verdict.killed {
                current = candidate;
                records.push(record);
                verdicts.push(verdict);
                mutants.push(LabeledMutant {
                    spec: current.clone(),
                    labels: records.iter().map(|r| r.fault_type).collect(),
                    plan: MutationPlan {
                        base_spec_id: spec.id.clone(),
                        records: records.clone(),
                        rng_seed,
                    },
                    verdicts: verdicts.clone(),
                });
                break;
            }
        }
    }

    if !any_applied {
        return Err(MutationError::ExhaustedOperators);
    }
    Ok(mutants)
}
