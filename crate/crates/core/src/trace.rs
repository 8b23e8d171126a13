//! Training-trace data model and the `.jsonl` trace interchange format.
//!
//! A trace file is UTF-8, one JSON object per line. Line 1 is the header:
//!
//! ```text
//! {"kind":"header","run_id":"r1","dataset":"blob","interval_policy":"per-epoch","layer_names":["dense","dense_1"]}
//! ```
//!
//! Every following non-blank line is an interval record:
//!
//! ```text
//! {"kind":"record","step":0,"epoch":0,"batch":null,"loss":0.69,"acc":0.5,"val_loss":0.7,"val_acc":"NaN",
//!  "layers":[{"name":"dense","w_min":-0.3,"w_max":0.4,"w_mean":0.01,"w_std":0.2,"w_nan":false,"w_inf":false,
//!             "g_min_abs":0.0,"g_max_abs":0.05,"g_mean_abs":0.01,"g_nan":false,"g_inf":false,"g_zero_frac":0.1}]}
//! ```
//!
//! JSON numbers cannot carry NaN or infinities, so real-valued fields accept
//! the strings `"NaN"`, `"Inf"` and `"-Inf"` in their place.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: layer schema {found:?} does not match header {expected:?}")]
    SchemaMismatch {
        line: usize,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("trace has no interval records")]
    EmptyTrace,
    #[error("I/O error reading trace: {0}")]
    Io(#[from] std::io::Error),
}

/// Serde adapter for reals that may be NaN or infinite.
pub(crate) mod real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_nan() {
            serializer.serialize_str("NaN")
        } else if value.is_infinite() {
            serializer.serialize_str(if *value > 0.0 { "Inf" } else { "-Inf" })
        } else {
            serializer.serialize_f64(*value)
        }
    }

    pub(crate) fn parse_special(s: &str) -> Option<f64> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nan" => Some(f64::NAN),
            "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            _ => None,
        }
    }

    struct RealVisitor;

    impl<'de> Visitor<'de> for RealVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"NaN\", \"Inf\", \"-Inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            parse_special(v).ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        deserializer.deserialize_any(RealVisitor)
    }

    pub mod opt {
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(
            value: &Option<f64>,
            serializer: S,
        ) -> Result<S::Ok, S::Error> {
            match value {
                Some(v) => super::serialize(v, serializer),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            deserializer: D,
        ) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrap>::deserialize(deserializer)?.map(|w| w.0))
        }
    }
}

/// Per-layer weight and gradient summary captured at one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    #[serde(rename = "name")]
    pub layer_name: String,
    #[serde(rename = "w_min", with = "real")]
    pub weight_min: f64,
    #[serde(rename = "w_max", with = "real")]
    pub weight_max: f64,
    #[serde(rename = "w_mean", with = "real")]
    pub weight_mean: f64,
    #[serde(rename = "w_std", with = "real")]
    pub weight_std: f64,
    #[serde(rename = "w_nan")]
    pub weight_has_nan: bool,
    #[serde(rename = "w_inf")]
    pub weight_has_inf: bool,
    #[serde(rename = "g_min_abs", with = "real")]
    pub grad_min_abs: f64,
    #[serde(rename = "g_max_abs", with = "real")]
    pub grad_max_abs: f64,
    #[serde(rename = "g_mean_abs", with = "real")]
    pub grad_mean_abs: f64,
    #[serde(rename = "g_nan")]
    pub grad_has_nan: bool,
    #[serde(rename = "g_inf")]
    pub grad_has_inf: bool,
    #[serde(rename = "g_zero_frac", with = "real")]
    pub grad_zero_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    #[serde(rename = "step")]
    pub step_index: u64,
    pub epoch: u64,
    #[serde(default)]
    pub batch: Option<u64>,
    #[serde(with = "real")]
    pub loss: f64,
    #[serde(rename = "acc", with = "real")]
    pub accuracy: f64,
    #[serde(default, with = "real::opt")]
    pub val_loss: Option<f64>,
    #[serde(rename = "val_acc", default, with = "real::opt")]
    pub val_accuracy: Option<f64>,
    pub layers: Vec<LayerStats>,
}

/// One training run's telemetry, records in emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub run_id: String,
    pub dataset_name: String,
    pub interval_policy: String,
    pub layer_names: Vec<String>,
    /// Free-form provenance notes carried in the header (e.g. how gradients were sampled).
    pub notes: Vec<String>,
    pub records: Vec<IntervalRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    kind: String,
    run_id: String,
    dataset: String,
    interval_policy: String,
    #[serde(default)]
    layer_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    kind: String,
    #[serde(flatten)]
    record: IntervalRecord,
}

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Parses a trace file. Blank lines are ignored; line numbers in errors are 1-based.
pub fn parse_trace_file(bytes: &[u8]) -> Result<RunTrace, TraceError> {
    parse_trace_reader(bytes)
}

pub fn parse_trace_reader<R: BufRead>(reader: R) -> Result<RunTrace, TraceError> {
    let mut header: Option<HeaderLine> = None;
    let mut records: Vec<IntervalRecord> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| {
            if e.kind() == std::io::ErrorKind::InvalidData {
                malformed(line_no, "invalid UTF-8")
            } else {
                TraceError::Io(e)
            }
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }

        let Some(head) = header.as_ref() else {
            let parsed: HeaderLine =
                serde_json::from_str(text).map_err(|e| malformed(line_no, e.to_string()))?;
            if parsed.kind != "header" {
                return Err(malformed(
                    line_no,
                    format!("expected header line, found kind `{}`", parsed.kind),
                ));
            }
            header = Some(parsed);
            continue;
        };

        let parsed: RecordLine =
            serde_json::from_str(text).map_err(|e| malformed(line_no, e.to_string()))?;
        if parsed.kind != "record" {
            return Err(malformed(
                line_no,
                format!("expected record line, found kind `{}`", parsed.kind),
            ));
        }
        let record = parsed.record;

        if let Some(prev) = records.last() {
            if record.step_index <= prev.step_index {
                return Err(malformed(
                    line_no,
                    format!(
                        "step {} does not increase on previous step {}",
                        record.step_index, prev.step_index
                    ),
                ));
            }
        }

        let found: Vec<&str> = record.layers.iter().map(|l| l.layer_name.as_str()).collect();
        let expected: Vec<&str> = match records.first() {
            Some(first) => first.layers.iter().map(|l| l.layer_name.as_str()).collect(),
            None if !head.layer_names.is_empty() => {
                head.layer_names.iter().map(String::as_str).collect()
            }
            None => found.clone(),
        };
        if found != expected {
            return Err(TraceError::SchemaMismatch {
                line: line_no,
                expected: expected.into_iter().map(String::from).collect(),
                found: found.into_iter().map(String::from).collect(),
            });
        }

        records.push(record);
    }

    let header = header.ok_or(TraceError::EmptyTrace)?;
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let layer_names = if header.layer_names.is_empty() {
        records[0]
            .layers
            .iter()
            .map(|l| l.layer_name.clone())
            .collect()
    } else {
        header.layer_names
    };

    Ok(RunTrace {
        run_id: header.run_id,
        dataset_name: header.dataset,
        interval_policy: header.interval_policy,
        layer_names,
        notes: header.notes,
        records,
    })
}

/// Serializes a trace back to the `.jsonl` format accepted by [`parse_trace_file`].
pub fn write_trace(trace: &RunTrace) -> String {
    let header = HeaderLine {
        kind: "header".into(),
        run_id: trace.run_id.clone(),
        dataset: trace.dataset_name.clone(),
        interval_policy: trace.interval_policy.clone(),
        layer_names: trace.layer_names.clone(),
        notes: trace.notes.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for record in &trace.records {
        let line = RecordLine {
            kind: "record".into(),
            record: record.clone(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("record serializes"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    /// Index into `RunTrace::records`, when the issue belongs to one record.
    pub record: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn push(&mut self, severity: Severity, record: Option<usize>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            severity,
            record,
            message: message.into(),
        });
    }
}

fn out_of_unit(v: f64) -> bool {
    v.is_finite() && !(0.0..=1.0).contains(&v)
}

/// Checks a trace against the data-model invariants. Never fails; problems are reported.
pub fn validate_trace(trace: &RunTrace) -> ValidationReport {
    let mut report = ValidationReport::default();

    if trace.records.is_empty() {
        report.push(Severity::Error, None, "trace has no records");
        return report;
    }
    if trace.records.len() < 2 {
        report.push(
            Severity::Warning,
            None,
            "fewer than 2 records; feature extraction needs at least 2",
        );
    }

    let schema: Vec<&str> = trace.records[0]
        .layers
        .iter()
        .map(|l| l.layer_name.as_str())
        .collect();
    if !trace.layer_names.is_empty()
        && trace.layer_names.iter().map(String::as_str).ne(schema.iter().copied())
    {
        report.push(
            Severity::Error,
            Some(0),
            "layer list does not match header layer_names",
        );
    }

    for (i, rec) in trace.records.iter().enumerate() {
        if i > 0 && rec.step_index <= trace.records[i - 1].step_index {
            report.push(Severity::Error, Some(i), "step index does not increase");
        }
        if rec.layers.iter().map(|l| l.layer_name.as_str()).ne(schema.iter().copied()) {
            report.push(
                Severity::Error,
                Some(i),
                "layer schema differs from the first record",
            );
        }
        if out_of_unit(rec.accuracy) {
            report.push(
                Severity::Error,
                Some(i),
                format!("accuracy out of [0,1]: {}", rec.accuracy),
            );
        }
        if let Some(v) = rec.val_accuracy {
            if out_of_unit(v) {
                report.push(
                    Severity::Error,
                    Some(i),
                    format!("validation accuracy out of [0,1]: {v}"),
                );
            }
        }
        for layer in &rec.layers {
            check_layer(&mut report, i, layer);
        }
    }

    let no_val_loss = trace.records.iter().all(|r| r.val_loss.is_none());
    let no_val_acc = trace.records.iter().all(|r| r.val_accuracy.is_none());
    if no_val_loss || no_val_acc {
        let missing = match (no_val_loss, no_val_acc) {
            (true, true) => "val_loss and val_acc",
            (true, false) => "val_loss",
            _ => "val_acc",
        };
        report.push(
            Severity::Warning,
            None,
            format!("{missing} missing in every record; validation indicators degenerate"),
        );
    }

    report
}

fn check_layer(report: &mut ValidationReport, i: usize, layer: &LayerStats) {
    let name = &layer.layer_name;
    if !layer.weight_has_nan
        && [layer.weight_min, layer.weight_mean, layer.weight_max]
            .iter()
            .all(|v| v.is_finite())
        && !(layer.weight_min <= layer.weight_mean && layer.weight_mean <= layer.weight_max)
    {
        report.push(
            Severity::Error,
            Some(i),
            format!("layer `{name}`: weight min/mean/max out of order"),
        );
    }
    if !layer.grad_has_nan
        && [layer.grad_min_abs, layer.grad_mean_abs, layer.grad_max_abs]
            .iter()
            .all(|v| v.is_finite())
        && !(layer.grad_min_abs <= layer.grad_mean_abs
            && layer.grad_mean_abs <= layer.grad_max_abs)
    {
        report.push(
            Severity::Error,
            Some(i),
            format!("layer `{name}`: gradient min/mean/max out of order"),
        );
    }
    if !(0.0..=1.0).contains(&layer.grad_zero_fraction) {
        report.push(
            Severity::Error,
            Some(i),
            format!(
                "layer `{name}`: g_zero_frac out of [0,1]: {}",
                layer.grad_zero_fraction
            ),
        );
    }
}
