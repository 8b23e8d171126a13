//! Independent reference implementations used to cross-check the library.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, StudentsT};
use tracefault::FaultLabelSet;

/// max, min, median, mean, var, std, skew, sem computed the slow way.
/// Variance uses the pairwise-difference identity rather than deviations
/// from the mean.
pub fn brute_aggregate(seq: &[f64]) -> [f64; 8] {
    let mut v: Vec<f64> = seq.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        v.push(0.0);
    }
    let n = v.len();
    let nf = n as f64;

    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);

    // Median by counting: the value with at most n/2 entries strictly below it.
    let rank = |k: usize| -> f64 {
        *v.iter()
            .find(|&&x| {
                let below = v.iter().filter(|&&y| y < x).count();
                let at = v.iter().filter(|&&y| y == x).count();
                below <= k && k < below + at
            })
            .unwrap()
    };
    let median = if n % 2 == 1 {
        rank(n / 2)
    } else {
        (rank(n / 2 - 1) + rank(n / 2)) / 2.0
    };

    let mean = v.iter().sum::<f64>() / nf;
    let var = if n < 2 {
        0.0
    } else {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += (v[i] - v[j]).powi(2);
            }
        }
        s / (nf * (nf - 1.0))
    };
    let std = var.sqrt();
    let m2: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    let m3: f64 = v.iter().map(|x| (x - mean) * (x - mean) * (x - mean)).sum::<f64>() / nf;
    let skew = if n < 3 || max == min || m2 == 0.0 {
        0.0
    } else {
        m3 / (m2 * m2.sqrt())
    };
    let sem = std / nf.sqrt();
    [max, min, median, mean, var, std, skew, sem]
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Cohen's d with the pooled standard deviation, for non-degenerate samples.
pub fn textbook_cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    (ma - mb) / sp
}

/// Two-sample equal-variance t-test p-value, via statrs.
pub fn textbook_pooled_t_p(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let dof = na + nb - 2.0;
    let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / dof;
    let t = (mb - ma) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Exhaustive-scan KNN: for each of the k picks, take the closest remaining
/// point, lowest index first on ties.
pub fn exhaustive_knn(
    points: &[Vec<f64>],
    labels: &[FaultLabelSet],
    k: usize,
    query: &[f64],
) -> FaultLabelSet {
    let dist: Vec<f64> = points
        .iter()
        .map(|p| p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut taken = vec![false; points.len()];
    let mut chosen = Vec::new();
    for _ in 0..k.min(points.len()) {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        chosen.push(b);
    }
    let mut out = FaultLabelSet::empty();
    for ty in tracefault::FaultType::ALL {
        let votes = chosen.iter().filter(|&&i| labels[i].contains(ty)).count();
        if votes * 2 > chosen.len() {
            out.insert(ty);
        }
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
