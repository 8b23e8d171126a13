//! Statistical aggregation of indicator sequences into diagnostic features,
//! min-max normalization, and the labeled feature CSV format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{Indicator, IndicatorMatrix, INDICATOR_COUNT};
use crate::labels::{FaultLabelSet, FaultType};

pub const OPERATOR_COUNT: usize = 8;
pub const FEATURE_DIM: usize = INDICATOR_COUNT * OPERATOR_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Max,
    Min,
    Median,
    Mean,
    Var,
    Std,
    Skew,
    Sem,
}

impl Operator {
    pub const ALL: [Operator; OPERATOR_COUNT] = [
        Operator::Max,
        Operator::Min,
        Operator::Median,
        Operator::Mean,
        Operator::Var,
        Operator::Std,
        Operator::Skew,
        Operator::Sem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Max => "max",
            Operator::Min => "min",
            Operator::Median => "median",
            Operator::Mean => "mean",
            Operator::Var => "var",
            Operator::Std => "std",
            Operator::Skew => "skew",
            Operator::Sem => "sem",
        }
    }
}

/// The eight operator values for one sequence, in [`Operator::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOctet(pub [f64; OPERATOR_COUNT]);

impl OperatorOctet {
    pub fn get(&self, op: Operator) -> f64 {
        self.0[op.index()]
    }
}

/// Keeps overflowed statistics finite.
fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(f64::MIN, f64::MAX)
    }
}

/// Applies max, min, median, mean, sample var/std, Fisher-Pearson skewness
/// and standard error of the mean to the finite entries of `seq`.
///
/// Non-finite entries are dropped first. An empty result behaves like the
/// singleton `[0.0]`.
pub fn aggregate(seq: &[f64]) -> OperatorOctet {
    let mut values: Vec<f64> = seq.iter().copied().filter(|v| v.is_finite()).collect();
    if values.is_empty() {
        values.push(0.0);
    }
    values.sort_by(f64::total_cmp);

    let n = values.len();
    let nf = n as f64;
    let min = values[0];
    let max = values[n - 1];
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    let mean = values.iter().sum::<f64>() / nf;

    let (var, skew) = if max == min {
        (0.0, 0.0)
    } else {
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let var = if n > 1 { m2 * nf / (nf - 1.0) } else { 0.0 };
        let skew = if n < 3 || m2 == 0.0 {
            0.0
        } else {
            m3 / m2.powf(1.5)
        };
        (var, skew)
    };
    let std = var.sqrt();
    let sem = std / nf.sqrt();

    OperatorOctet([max, min, median, mean, var, std, skew, sem].map(saturate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, indicator: Indicator, op: Operator) -> f64 {
        self.0[feature_index(indicator, op)]
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn feature_index(indicator: Indicator, op: Operator) -> usize {
    indicator.index() * OPERATOR_COUNT + op.index()
}

/// `ft_<indicator>_<operator>` for all 160 features in layout order.
pub fn feature_names() -> Vec<String> {
    Indicator::ALL
        .iter()
        .flat_map(|ind| {
            Operator::ALL
                .iter()
                .map(move |op| format!("ft_{}_{}", ind.name(), op.name()))
        })
        .collect()
}

pub fn extract_features(matrix: &IndicatorMatrix) -> FeatureVector {
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for seq in matrix.sequences() {
        values.extend_from_slice(&aggregate(seq).0);
    }
    FeatureVector(values)
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("expected {expected} dimensions, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Per-dimension minimum and maximum of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_normalizer<V: AsRef<[f64]>>(dataset: &[V]) -> Result<NormParams, FeatureError> {
    let first = dataset.first().ok_or(FeatureError::EmptyDataset)?.as_ref();
    let mut min = first.to_vec();
    let mut max = first.to_vec();
    for row in &dataset[1..] {
        let row = row.as_ref();
        if row.len() != min.len() {
            return Err(FeatureError::DimensionMismatch {
                expected: min.len(),
                found: row.len(),
            });
        }
        for (i, &v) in row.iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    Ok(NormParams { min, max })
}

impl NormParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Min-max scales into `[0,1]`, clamping values outside the fitted range.
    /// Dimensions with zero range map to 0.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if x.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let range = self.max[i] - self.min[i];
                if range > 0.0 && range.is_finite() {
                    ((v - self.min[i]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn normalize(x: &[f64], params: &NormParams) -> Result<Vec<f64>, FeatureError> {
    params.normalize(x)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
}

/// One row of the feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub run_id: String,
    pub features: FeatureVector,
    pub labels: Option<FaultLabelSet>,
}

pub fn label_column(ty: FaultType) -> String {
    format!("label_{}", ty.name())
}

/// Writes `run_id`, the 160 `ft_*` columns and, when `with_labels`, five 0/1 label columns.
pub fn write_feature_csv<W: Write>(
    writer: W,
    rows: &[FeatureRow],
    with_labels: bool,
) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["run_id".to_string()];
    header.extend(feature_names());
    if with_labels {
        header.extend(FaultType::ALL.map(label_column));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.run_id.clone()];
        rec.extend(row.features.0.iter().map(|v| v.to_string()));
        if with_labels {
            let labels = row.labels.unwrap_or_default();
            rec.extend(FaultType::ALL.map(|ty| if labels.contains(ty) { "1" } else { "0" }.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a feature CSV. Column order is free; names must match. With
/// `require_labels`, all five label columns must be present.
pub fn read_feature_csv<R: Read>(
    reader: R,
    require_labels: bool,
) -> Result<Vec<FeatureRow>, DatasetError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let position: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let run_col = *position
        .get("run_id")
        .ok_or_else(|| DatasetError::Schema("missing column `run_id`".into()))?;
    let feature_cols = feature_names()
        .iter()
        .map(|name| {
            position
                .get(name.as_str())
                .copied()
                .ok_or_else(|| DatasetError::Schema(format!("missing column `{name}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let label_cols: Vec<Option<usize>> = FaultType::ALL
        .iter()
        .map(|ty| position.get(label_column(*ty).as_str()).copied())
        .collect();
    let has_labels = label_cols.iter().all(Option::is_some);
    if require_labels && !has_labels {
        let missing: Vec<String> = FaultType::ALL
            .iter()
            .zip(&label_cols)
            .filter(|(_, c)| c.is_none())
            .map(|(ty, _)| label_column(*ty))
            .collect();
        return Err(DatasetError::Schema(format!(
            "missing label column(s): {}",
            missing.join(", ")
        )));
    }

    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |col: usize| rec.get(col).unwrap_or("");
        let features = feature_cols
            .iter()
            .map(|&c| {
                let text = field(c).trim();
                text.parse::<f64>()
                    .map_err(|_| DatasetError::Schema(format!("row {line}: bad number `{text}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels = if has_labels {
            let mut flags = [false; 5];
            for (k, col) in label_cols.iter().enumerate() {
                flags[k] = match field(col.unwrap()).trim() {
                    "1" | "true" | "True" => true,
                    "0" | "false" | "False" => false,
                    other => {
                        return Err(DatasetError::Schema(format!(
                            "row {line}: label value `{other}` is not 0/1"
                        )))
                    }
                };
            }
            Some(FaultLabelSet::from_bools(flags))
        } else {
            None
        };
        rows.push(FeatureRow {
            run_id: field(run_col).to_string(),
            features: FeatureVector(features),
            labels,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn three_point_octet() {
        let o = aggregate(&[1.0, 2.0, 3.0]);
        assert_eq!(o.get(Operator::Max), 3.0);
        assert_eq!(o.get(Operator::Min), 1.0);
        assert_eq!(o.get(Operator::Median), 2.0);
        assert_eq!(o.get(Operator::Mean), 2.0);
        assert_eq!(o.get(Operator::Var), 1.0);
        assert_eq!(o.get(Operator::Std), 1.0);
        assert_eq!(o.get(Operator::Skew), 0.0);
        assert_abs_diff_eq!(o.get(Operator::Sem), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn constant_octet() {
        let o = aggregate(&[0.1; 4]);
        assert_eq!(o.0, [0.1, 0.1, 0.1, o.get(Operator::Mean), 0.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(o.get(Operator::Mean), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn even_median_averages_middle_pair() {
        assert_eq!(aggregate(&[4.0, 1.0, 3.0, 2.0]).get(Operator::Median), 2.5);
    }

    #[test]
    fn nan_entries_dropped_and_all_nan_is_zero() {
        let o = aggregate(&[f64::NAN, 1.0, 2.0, 3.0, f64::INFINITY]);
        assert_eq!(o, aggregate(&[1.0, 2.0, 3.0]));
        assert_eq!(aggregate(&[f64::NAN, f64::NAN]).0, [0.0; 8]);
    }

    #[test]
    fn singleton_has_zero_spread() {
        let o = aggregate(&[7.0]);
        assert_eq!(o.0, [7.0, 7.0, 7.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn names_and_layout() {
        let names = feature_names();
        assert_eq!(names.len(), FEATURE_DIM);
        assert_eq!(names[0], "ft_loss_max");
        assert_eq!(names[7], "ft_loss_sem");
        assert_eq!(names[8], "ft_acc_max");
        assert_eq!(names[159], "ft_gradient_explosion_sem");
        assert_eq!(feature_index(Indicator::Acc, Operator::Skew), 14);
    }

    #[test]
    fn toy_normalization() {
        let p = fit_normalizer(&[vec![0.0, 10.0], vec![4.0, 20.0]]).unwrap();
        assert_eq!(p.normalize(&[2.0, 15.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(p.normalize(&[-3.0, 99.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_dimension_normalizes_to_zero() {
        let p = fit_normalizer(&[vec![5.0, 1.0], vec![5.0, 2.0]]).unwrap();
        for x in [0.0, 5.0, 100.0] {
            assert_eq!(p.normalize(&[x, 1.5]).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(fit_normalizer(&empty), Err(FeatureError::EmptyDataset));
    }

    #[test]
    fn csv_round_trip_and_schema_errors() {
        let rows: Vec<FeatureRow> = (0..3)
            .map(|i| FeatureRow {
                run_id: format!("run{i}"),
                features: FeatureVector((0..FEATURE_DIM).map(|j| (i * j) as f64 * 0.5).collect()),
                labels: Some(FaultLabelSet::from_bools([i == 0, false, i == 1, false, true])),
            })
            .collect();
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &rows, true).unwrap();
        let back = read_feature_csv(buf.as_slice(), true).unwrap();
        assert_eq!(back, rows);

        let mut unlabeled = Vec::new();
        write_feature_csv(&mut unlabeled, &rows, false).unwrap();
        let back = read_feature_csv(unlabeled.as_slice(), false).unwrap();
        assert!(back.iter().all(|r| r.labels.is_none()));
        assert!(matches!(
            read_feature_csv(unlabeled.as_slice(), true),
            Err(DatasetError::Schema(_))
        ));
    }
}
