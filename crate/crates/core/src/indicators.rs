//! The 20 runtime indicators derived from a training trace.
//!
//! Every indicator is a per-interval sequence aligned with the trace records.
//! The first four carry raw metrics; the remaining sixteen are 0/1 event
//! streams, so "number of times X happened" is the sum of the stream and
//! "whether X happened" is its maximum.
//!
//! Comparisons that involve a NaN never fire an event; NaNs are already
//! surfaced by the `nan_*` indicators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{IntervalRecord, RunTrace};

pub const INDICATOR_COUNT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indicator {
    Loss,
    Acc,
    LossVal,
    AccVal,
    NanLoss,
    NanAccuracy,
    NanWeight,
    NanGradient,
    LargeWeight,
    DecreaseAcc,
    IncreaseLoss,
    ConsMeanWeight,
    ConsStdWeight,
    GapTrainTest,
    TestTurnBad,
    SlowConverge,
    OscillatingLoss,
    DyingRelu,
    GradientVanish,
    GradientExplosion,
}

impl Indicator {
    pub const ALL: [Indicator; INDICATOR_COUNT] = [
        Indicator::Loss,
        Indicator::Acc,
        Indicator::LossVal,
        Indicator::AccVal,
        Indicator::NanLoss,
        Indicator::NanAccuracy,
        Indicator::NanWeight,
        Indicator::NanGradient,
        Indicator::LargeWeight,
        Indicator::DecreaseAcc,
        Indicator::IncreaseLoss,
        Indicator::ConsMeanWeight,
        Indicator::ConsStdWeight,
        Indicator::GapTrainTest,
        Indicator::TestTurnBad,
        Indicator::SlowConverge,
        Indicator::OscillatingLoss,
        Indicator::DyingRelu,
        Indicator::GradientVanish,
        Indicator::GradientExplosion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Loss => "loss",
            Indicator::Acc => "acc",
            Indicator::LossVal => "loss_val",
            Indicator::AccVal => "acc_val",
            Indicator::NanLoss => "nan_loss",
            Indicator::NanAccuracy => "nan_accuracy",
            Indicator::NanWeight => "nan_weight",
            Indicator::NanGradient => "nan_gradient",
            Indicator::LargeWeight => "large_weight",
            Indicator::DecreaseAcc => "decrease_acc",
            Indicator::IncreaseLoss => "increase_loss",
            Indicator::ConsMeanWeight => "cons_mean_weight",
            Indicator::ConsStdWeight => "cons_std_weight",
            Indicator::GapTrainTest => "gap_train_test",
            Indicator::TestTurnBad => "test_turn_bad",
            Indicator::SlowConverge => "slow_converge",
            Indicator::OscillatingLoss => "oscillating_loss",
            Indicator::DyingRelu => "dying_relu",
            Indicator::GradientVanish => "gradient_vanish",
            Indicator::GradientExplosion => "gradient_explosion",
        }
    }

    /// True for the 0/1 event streams (everything after the four raw metrics).
    pub fn is_event(self) -> bool {
        self.index() >= 4
    }
}

/// Thresholds for the event indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorConfig {
    pub large_weight_threshold: f64,
    pub const_tolerance: f64,
    pub gap_threshold: f64,
    pub slow_converge_window: usize,
    pub slow_converge_min_gain: f64,
    pub slow_converge_acc_ceiling: f64,
    pub oscillation_window: usize,
    pub oscillation_min_flips: usize,
    pub dying_relu_window: usize,
    pub dying_relu_zero_fraction: f64,
    pub dying_relu_acc_ceiling: f64,
    pub vanish_threshold: f64,
    pub explode_threshold: f64,
    pub problem_acc_ceiling: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            large_weight_threshold: 1e3,
            const_tolerance: 1e-12,
            gap_threshold: 0.1,
            slow_converge_window: 5,
            slow_converge_min_gain: 0.01,
            slow_converge_acc_ceiling: 0.8,
            oscillation_window: 5,
            oscillation_min_flips: 3,
            dying_relu_window: 5,
            dying_relu_zero_fraction: 0.7,
            dying_relu_acc_ceiling: 0.6,
            vanish_threshold: 1e-7,
            explode_threshold: 1e3,
            problem_acc_ceiling: 0.6,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("trace has {0} records; at least 2 are required")]
    TraceTooShort(usize),
    #[error("invalid indicator config: {0}")]
    InvalidConfig(String),
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let positive = [
            ("large_weight_threshold", self.large_weight_threshold),
            ("const_tolerance", self.const_tolerance),
            ("gap_threshold", self.gap_threshold),
            ("slow_converge_min_gain", self.slow_converge_min_gain),
            ("slow_converge_acc_ceiling", self.slow_converge_acc_ceiling),
            ("vanish_threshold", self.vanish_threshold),
            ("explode_threshold", self.explode_threshold),
            ("problem_acc_ceiling", self.problem_acc_ceiling),
            ("dying_relu_acc_ceiling", self.dying_relu_acc_ceiling),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IndicatorError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if !(self.dying_relu_zero_fraction > 0.0 && self.dying_relu_zero_fraction <= 1.0) {
            return Err(IndicatorError::InvalidConfig(
                "dying_relu_zero_fraction must be in (0,1]".into(),
            ));
        }
        for (name, w) in [
            ("slow_converge_window", self.slow_converge_window),
            ("oscillation_window", self.oscillation_window),
            ("dying_relu_window", self.dying_relu_window),
        ] {
            if w < 2 {
                return Err(IndicatorError::InvalidConfig(format!("{name} must be >= 2")));
            }
        }
        if self.oscillation_min_flips == 0 {
            return Err(IndicatorError::InvalidConfig(
                "oscillation_min_flips must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// 20 equal-length sequences, one value per trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    sequences: Vec<Vec<f64>>,
}

impl IndicatorMatrix {
    /// Builds a matrix from raw sequences; all 20 must have the same non-zero length.
    pub fn from_sequences(sequences: Vec<Vec<f64>>) -> Option<Self> {
        if sequences.len() != INDICATOR_COUNT {
            return None;
        }
        let len = sequences[0].len();
        if len == 0 || sequences.iter().any(|s| s.len() != len) {
            return None;
        }
        Some(IndicatorMatrix { sequences })
    }

    pub fn names() -> [&'static str; INDICATOR_COUNT] {
        Indicator::ALL.map(Indicator::name)
    }

    pub fn len(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, indicator: Indicator) -> &[f64] {
        &self.sequences[indicator.index()]
    }

    pub fn sequences(&self) -> &[Vec<f64>] {
        &self.sequences
    }

    /// Number of intervals at which an event indicator fired.
    pub fn event_count(&self, indicator: Indicator) -> usize {
        self.get(indicator).iter().filter(|&&v| v == 1.0).count()
    }

    /// One column per indicator, one row per interval. NaN cells are written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("step");
        for name in Self::names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for t in 0..self.len() {
            out.push_str(&t.to_string());
            for seq in &self.sequences {
                out.push(',');
                out.push_str(&seq[t].to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn flag(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

fn finite_pair(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite()
}

fn layer_average(rec: &IntervalRecord, f: impl Fn(&crate::trace::LayerStats) -> f64) -> f64 {
    if rec.layers.is_empty() {
        return f64::NAN;
    }
    rec.layers.iter().map(f).sum::<f64>() / rec.layers.len() as f64
}

/// Max over layers, NaN-skipping; NaN when no layer has a finite-or-infinite value.
fn layer_max(rec: &IntervalRecord, f: impl Fn(&crate::trace::LayerStats) -> f64) -> f64 {
    rec.layers
        .iter()
        .map(f)
        .filter(|v| !v.is_nan())
        .fold(f64::NAN, f64::max)
}

fn layer_min(rec: &IntervalRecord, f: impl Fn(&crate::trace::LayerStats) -> f64) -> f64 {
    rec.layers
        .iter()
        .map(f)
        .filter(|v| !v.is_nan())
        .fold(f64::NAN, f64::min)
}

fn sign_flips(values: &[f64]) -> usize {
    let signs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn compute_indicators(
    trace: &RunTrace,
    cfg: &IndicatorConfig,
) -> Result<IndicatorMatrix, IndicatorError> {
    cfg.validate()?;
    let recs = &trace.records;
    let n = recs.len();
    if n < 2 {
        return Err(IndicatorError::TraceTooShort(n));
    }

    let loss: Vec<f64> = recs.iter().map(|r| r.loss).collect();
    let acc: Vec<f64> = recs.iter().map(|r| r.accuracy).collect();
    let val_loss: Vec<f64> = recs.iter().map(|r| r.val_loss.unwrap_or(f64::NAN)).collect();
    let val_acc: Vec<f64> = recs
        .iter()
        .map(|r| r.val_accuracy.unwrap_or(f64::NAN))
        .collect();
    let mean_weight: Vec<f64> = recs.iter().map(|r| layer_average(r, |l| l.weight_mean)).collect();
    let std_weight: Vec<f64> = recs.iter().map(|r| layer_average(r, |l| l.weight_std)).collect();

    let mut seqs: Vec<Vec<f64>> = (0..INDICATOR_COUNT).map(|_| Vec::with_capacity(n)).collect();
    let mut finite_losses: Vec<f64> = Vec::with_capacity(n);

    for (t, rec) in recs.iter().enumerate() {
        if loss[t].is_finite() {
            finite_losses.push(loss[t]);
        }
        let prev = t.checked_sub(1);
        let acc_low = |ceiling: f64| acc[t] < ceiling;

        let nan_weight = rec.layers.iter().any(|l| l.weight_has_nan || l.weight_has_inf);
        let nan_grad = rec.layers.iter().any(|l| l.grad_has_nan || l.grad_has_inf);
        let max_abs_weight = layer_max(rec, |l| l.weight_min.abs().max(l.weight_max.abs()));

        let decrease_acc = prev.is_some_and(|p| finite_pair(acc[t], acc[p]) && acc[t] < acc[p]);
        let increase_loss =
            prev.is_some_and(|p| finite_pair(loss[t], loss[p]) && loss[t] > loss[p]);
        let cons_mean = prev.is_some_and(|p| {
            (mean_weight[t] - mean_weight[p]).abs() <= cfg.const_tolerance
        });
        let cons_std =
            prev.is_some_and(|p| (std_weight[t] - std_weight[p]).abs() <= cfg.const_tolerance);
        let gap = acc[t] - val_acc[t] > cfg.gap_threshold;
        let test_turn_bad = prev.is_some_and(|p| {
            loss[t] < loss[p] && val_loss[t] > val_loss[p]
        });

        let w = cfg.slow_converge_window;
        let slow = t + 1 >= w && {
            let base = acc[t + 1 - w];
            finite_pair(acc[t], base)
                && acc[t] - base < cfg.slow_converge_min_gain
                && acc_low(cfg.slow_converge_acc_ceiling)
        };

        let tail_start = finite_losses.len().saturating_sub(cfg.oscillation_window);
        let oscillating = sign_flips(&finite_losses[tail_start..]) >= cfg.oscillation_min_flips;

        let window_start = (t + 1).saturating_sub(cfg.dying_relu_window);
        let zero_fracs: Vec<f64> = recs[window_start..=t]
            .iter()
            .map(|r| layer_average(r, |l| l.grad_zero_fraction))
            .filter(|v| v.is_finite())
            .collect();
        let dying = !zero_fracs.is_empty()
            && zero_fracs.iter().sum::<f64>() / zero_fracs.len() as f64
                >= cfg.dying_relu_zero_fraction
            && acc_low(cfg.dying_relu_acc_ceiling);

        let vanish = layer_min(rec, |l| l.grad_mean_abs) < cfg.vanish_threshold
            && acc_low(cfg.problem_acc_ceiling);
        let explode = (layer_max(rec, |l| l.grad_max_abs) > cfg.explode_threshold || nan_grad)
            && acc_low(cfg.problem_acc_ceiling);

        let row = [
            loss[t],
            acc[t],
            val_loss[t],
            val_acc[t],
            flag(!loss[t].is_finite()),
            flag(acc[t].is_nan()),
            flag(nan_weight),
            flag(nan_grad),
            flag(max_abs_weight > cfg.large_weight_threshold),
            flag(decrease_acc),
            flag(increase_loss),
            flag(cons_mean),
            flag(cons_std),
            flag(gap),
            flag(test_turn_bad),
            flag(slow),
            flag(oscillating),
            flag(dying),
            flag(vanish),
            flag(explode),
        ];
        for (seq, v) in seqs.iter_mut().zip(row) {
            seq.push(v);
        }
    }

    Ok(IndicatorMatrix { sequences: seqs })
}
