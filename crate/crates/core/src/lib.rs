//! Fault diagnosis and localization for deep-learning training programs.
//!
//! The pipeline has three stages:
//!
//! 1. [`trace`] parses the line-delimited JSON telemetry of a training run,
//!    [`indicators`] turns it into 20 per-interval runtime sequences and
//!    [`features`] aggregates each sequence with 8 statistical operators into
//!    a 160-dimensional feature vector.
//! 2. [`classifiers`] trains multi-label KNN, decision-tree and random-forest
//!    diagnosers on labeled feature vectors and unions their predictions over
//!    repeated runs of the program under test.
//! 3. [`localizer`] parses the Keras-style training script and maps each
//!    diagnosed fault type to the source lines that define it.
//!
//! Building the labeled corpus for the diagnosers is handled by [`mutation`]
//! (fault seeding) and [`stats`] (the mutant kill check). [`synth`] generates
//! synthetic traces with planted fault signatures for testing the pipeline
//! without a training framework.

pub mod classifiers;
pub mod features;
pub mod indicators;
pub mod labels;
pub mod localizer;
pub mod mutation;
pub mod stats;
pub mod synth;
pub mod trace;

pub use classifiers::{
    diagnose, evaluate, train_diagnosers, DiagnoserBundle, DiagnosisReport, LabeledSample,
    TrainConfig,
};
pub use features::{extract_features, FeatureVector, NormParams, FEATURE_DIM};
pub use indicators::{compute_indicators, IndicatorConfig, IndicatorMatrix};
pub use labels::{FaultLabelSet, FaultType};
pub use localizer::{localize, parse_program, LocalizationReport, ProgramModel};
pub use mutation::{ModelSpec, MutationPlan};
pub use stats::{cohens_d, glm_p_value, is_kill, AccuracySamples, KillVerdict};
pub use trace::{parse_trace_file, validate_trace, RunTrace};
