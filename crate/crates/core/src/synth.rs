//! Synthetic training traces with planted fault signatures.
//!
//! A healthy run has an exponentially decaying loss, accuracy rising towards
//! a plateau, slowly drifting weights and moderate gradients. Each fault type
//! adds its own signature on top:
//!
//! | fault       | signature                                                   |
//! |-------------|-------------------------------------------------------------|
//! | `lr`        | loss and accuracy alternate up and down every interval      |
//! | `loss`      | inflated loss scale; validation drifts away from training   |
//! | `epoch`     | run stops early, while accuracy is still climbing           |
//! | `optimizer` | weights stop moving partway through the run                 |
//! | `act`       | accuracy stuck near chance, vanishing and zeroed gradients |
//!
//! Per-run parameters are drawn from a seeded RNG; there is no per-interval
//! noise, so event indicators fire only where a signature is planted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{FaultLabelSet, FaultType};
use crate::trace::{IntervalRecord, LayerStats, RunTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Interval count range for a run trained to completion.
    pub full_length: (usize, usize),
    /// Interval count range for a run cut short by an epoch fault.
    pub short_length: (usize, usize),
    pub layers: usize,
    /// Replace the loss at this interval with NaN.
    pub nan_loss_at: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            full_length: (45, 55),
            short_length: (6, 10),
            layers: 2,
            nan_loss_at: None,
        }
    }
}

struct Params {
    len: usize,
    loss_start: f64,
    loss_end: f64,
    tau: f64,
    acc_start: f64,
    acc_end: f64,
    loss_scale: f64,
    val_drift: f64,
    val_gap: f64,
    oscillation: f64,
    freeze_at: Option<usize>,
    weight_drift: f64,
    grad_scale: f64,
    zero_fraction: f64,
}

fn draw_params<R: Rng>(faults: FaultLabelSet, cfg: &SynthConfig, rng: &mut R) -> Params {
    let full = rng.random_range(cfg.full_length.0..=cfg.full_length.1);
    // The time constant always refers to the full run so an early stop
    // truncates the same curve.
    let tau = full as f64 * rng.random_range(0.18..0.22);
    let len = if faults.contains(FaultType::Epoch) {
        rng.random_range(cfg.short_length.0..=cfg.short_length.1)
    } else {
        full
    };
    let stuck = faults.contains(FaultType::Act);
    Params {
        len: len.max(2),
        loss_start: rng.random_range(0.68..0.72),
        loss_end: rng.random_range(0.04..0.06),
        tau,
        acc_start: rng.random_range(0.48..0.52),
        acc_end: if stuck {
            rng.random_range(0.53..0.55)
        } else {
            rng.random_range(0.94..0.97)
        },
        loss_scale: if faults.contains(FaultType::Loss) {
            rng.random_range(6.0..10.0)
        } else {
            1.0
        },
        val_drift: if faults.contains(FaultType::Loss) {
            rng.random_range(0.02..0.04)
        } else {
            0.0
        },
        val_gap: if faults.contains(FaultType::Loss) {
            rng.random_range(0.15..0.2)
        } else {
            0.02
        },
        oscillation: if faults.contains(FaultType::Lr) {
            rng.random_range(0.3..0.5)
        } else {
            0.0
        },
        freeze_at: faults
            .contains(FaultType::Optimizer)
            .then(|| ((len as f64) * rng.random_range(0.2..0.4)) as usize),
        weight_drift: rng.random_range(0.005..0.01),
        grad_scale: if stuck { 1e-9 } else { rng.random_range(5e-3..2e-2) },
        zero_fraction: if stuck {
            rng.random_range(0.8..0.95)
        } else {
            rng.random_range(0.05..0.2)
        },
    }
}

/// Generates one trace for `faults`; identical inputs give identical traces.
pub fn synth_trace(faults: FaultLabelSet, seed: u64, cfg: &SynthConfig) -> RunTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = draw_params(faults, cfg, &mut rng);
    let layer_names: Vec<String> = (0..cfg.layers.max(1)).map(|i| format!("dense_{i}")).collect();

    let records = (0..p.len)
        .map(|t| {
            let decay = (-(t as f64) / p.tau).exp();
            let swing = if t % 2 == 1 { 1.0 } else { -1.0 } * p.oscillation;
            let mut loss = (p.loss_end + (p.loss_start - p.loss_end) * decay) * p.loss_scale * (1.0 + swing);
            if cfg.nan_loss_at == Some(t) {
                loss = f64::NAN;
            }
            let acc = (p.acc_end - (p.acc_end - p.acc_start) * decay - 0.5 * swing * (p.acc_end - 0.5))
                .clamp(0.0, 1.0);

            let moving = p.freeze_at.map_or(t, |f| t.min(f)) as f64;
            let layers = layer_names
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let spread = 0.05 * (i + 1) as f64;
                    let mean = 0.01 * i as f64 + p.weight_drift * moving;
                    let std = spread + 0.5 * p.weight_drift * moving;
                    let grad = p.grad_scale * (1.0 + 0.5 * decay) / (i + 1) as f64;
                    LayerStats {
                        layer_name: name.clone(),
                        weight_min: mean - 3.0 * std,
                        weight_max: mean + 3.0 * std,
                        weight_mean: mean,
                        weight_std: std,
                        weight_has_nan: false,
                        weight_has_inf: false,
                        grad_min_abs: 0.0,
                        grad_max_abs: grad * 20.0,
                        grad_mean_abs: grad,
                        grad_has_nan: false,
                        grad_has_inf: false,
                        grad_zero_fraction: p.zero_fraction,
                    }
                })
                .collect();

            IntervalRecord {
                step_index: t as u64,
                epoch: t as u64,
                batch: None,
                loss,
                accuracy: acc,
                val_loss: Some(loss * 1.05 * (1.0 + p.val_drift * t as f64)),
                val_accuracy: Some((acc - p.val_gap).max(0.0)),
                layers,
            }
        })
        .collect();

    RunTrace {
        run_id: format!("synth-{seed}"),
        dataset_name: "synthetic".into(),
        interval_policy: "epoch".into(),
        layer_names,
        notes: vec![format!("planted faults: {faults}")],
        records,
    }
}

/// `n` traces whose label sets are drawn uniformly from all 32 combinations.
pub fn synth_corpus(n: usize, seed: u64, cfg: &SynthConfig) -> Vec<(RunTrace, FaultLabelSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let labels = FaultLabelSet::from_bools(std::array::from_fn(|_| rng.random_bool(0.5)));
            let trace_seed = rng.random();
            (synth_trace(labels, trace_seed, cfg), labels)
        })
        .collect()
}
