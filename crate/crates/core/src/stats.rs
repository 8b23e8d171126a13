//! Effect size, significance testing and the mutant kill decision.
//!
//! A mutant is killed when its test-accuracy distribution is both
//! significantly different from the original program's (GLM p-value below
//! `alpha`), practically different (Cohen's d at least `beta`), and worse on
//! average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stand-in for an infinite effect size when both samples have zero spread.
pub const MAX_EFFECT_SIZE: f64 = 1e9;

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("sample value {0} is not finite")]
    NonFinite(f64),
}

/// Test-set accuracies of repeated trainings of one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracySamples(Vec<f64>);

impl AccuracySamples {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(bad));
        }
        Ok(AccuracySamples(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Sum of squared deviations from the mean; exactly 0 for constant samples.
    fn sum_sq_dev(&self) -> f64 {
        let first = self.0[0];
        if self.0.iter().all(|&v| v == first) {
            return 0.0;
        }
        let m = self.mean();
        self.0.iter().map(|v| (v - m).powi(2)).sum()
    }

    /// Sample variance (divisor n - 1).
    pub fn variance(&self) -> f64 {
        if self.0.len() < 2 {
            return 0.0;
        }
        self.sum_sq_dev() / (self.0.len() - 1) as f64
    }

    fn require(&self, needed: usize) -> Result<(), StatsError> {
        if self.0.len() < needed {
            Err(StatsError::TooFewSamples {
                needed,
                found: self.0.len(),
            })
        } else {
            Ok(())
        }
    }
}

impl TryFrom<Vec<f64>> for AccuracySamples {
    type Error = StatsError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        AccuracySamples::new(values)
    }
}

fn pooled_sd(a: &AccuracySamples, b: &AccuracySamples) -> f64 {
    let dof = (a.len() + b.len()) as f64 - 2.0;
    ((a.sum_sq_dev() + b.sum_sq_dev()) / dof).sqrt()
}

/// Standardized mean difference `(mean(a) - mean(b)) / s_pooled`.
///
/// With zero pooled spread the result is 0 for equal means and
/// `±MAX_EFFECT_SIZE` otherwise.
pub fn cohens_d(a: &AccuracySamples, b: &AccuracySamples) -> Result<f64, StatsError> {
    a.require(2)?;
    b.require(2)?;
    let diff = a.mean() - b.mean();
    let sp = pooled_sd(a, b);
    if sp == 0.0 {
        return Ok(if diff == 0.0 {
            0.0
        } else {
            MAX_EFFECT_SIZE.copysign(diff)
        });
    }
    Ok((diff / sp).clamp(-MAX_EFFECT_SIZE, MAX_EFFECT_SIZE))
}

/// Result of regressing accuracy on a 0/1 group indicator (1 = sample `b`)
/// with a Gaussian-family, identity-link GLM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlmGroupTest {
    pub intercept: f64,
    /// Estimated `mean(b) - mean(a)`.
    pub group_coefficient: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    /// Residual variance was zero; `p_value` is then 0 or 1 by convention.
    pub degenerate_variance: bool,
}

/// Fits `acc = b0 + b1 * group` by least squares (the Gaussian/identity GLM
/// maximum-likelihood fit) and Wald-tests `b1 = 0` against Student's t with
/// `n - 2` degrees of freedom.
pub fn glm_group_test(a: &AccuracySamples, b: &AccuracySamples) -> Result<GlmGroupTest, StatsError> {
    a.require(1)?;
    b.require(1)?;
    let n = a.len() + b.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, found: n });
    }

    // Design matrix columns: intercept, group. Normal equations XᵀX β = Xᵀy.
    let nf = n as f64;
    let n1 = b.len() as f64;
    let sum_y: f64 = a.values().iter().chain(b.values()).sum();
    let sum_y1: f64 = b.values().iter().sum();
    let xtx = [[nf, n1], [n1, n1]];
    let det = xtx[0][0] * xtx[1][1] - xtx[0][1] * xtx[1][0];
    let inv = [
        [xtx[1][1] / det, -xtx[0][1] / det],
        [-xtx[1][0] / det, xtx[0][0] / det],
    ];
    let intercept = inv[0][0] * sum_y + inv[0][1] * sum_y1;
    let slope = inv[1][0] * sum_y + inv[1][1] * sum_y1;

    let dof = nf - 2.0;
    let rss = a.sum_sq_dev() + b.sum_sq_dev();
    let dispersion = rss / dof;
    let std_error = (dispersion * inv[1][1]).sqrt();

    let means_equal = a.mean() == b.mean();
    if rss == 0.0 {
        return Ok(GlmGroupTest {
            intercept,
            group_coefficient: slope,
            std_error: 0.0,
            t_statistic: if means_equal { 0.0 } else { f64::INFINITY.copysign(slope) },
            degrees_of_freedom: dof,
            p_value: if means_equal { 1.0 } else { 0.0 },
            degenerate_variance: true,
        });
    }

    let t = if means_equal { 0.0 } else { slope / std_error };
    Ok(GlmGroupTest {
        intercept,
        group_coefficient: slope,
        std_error,
        t_statistic: t,
        degrees_of_freedom: dof,
        p_value: student_t_two_sided_p(t, dof),
        degenerate_variance: false,
    })
}

pub fn glm_p_value(a: &AccuracySamples, b: &AccuracySamples) -> Result<f64, StatsError> {
    Ok(glm_group_test(a, b)?.p_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KillVerdict {
    pub killed: bool,
    pub effect_size: f64,
    pub p_value: f64,
    pub mutant_worse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KillThresholds {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for KillThresholds {
    fn default() -> Self {
        KillThresholds {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

/// Decides whether a mutant is killed. The effect size is oriented so that a
/// worse mutant gives a positive d.
pub fn is_kill(
    orig: &AccuracySamples,
    mutant: &AccuracySamples,
    alpha: f64,
    beta: f64,
) -> Result<KillVerdict, StatsError> {
    orig.require(2)?;
    mutant.require(2)?;
    let effect_size = cohens_d(orig, mutant)?;
    let p_value = glm_p_value(orig, mutant)?;
    let mutant_worse = mutant.mean() < orig.mean();
    Ok(KillVerdict {
        killed: effect_size >= beta && p_value < alpha && mutant_worse,
        effect_size,
        p_value,
        mutant_worse,
    })
}

/// Two-sided p-value `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(dof / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Student's t cumulative distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, dof);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Natural log of the gamma function (Lanczos approximation, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
