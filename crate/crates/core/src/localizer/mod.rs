//! Maps diagnosed fault types to the source lines of a Keras-style training
//! script.
//!
//! The script is tokenized with a bracket-aware lexer and parsed statement by
//! statement. Calls that matter for localization (layer constructors,
//! `compile`, `fit`, optimizer constructors) are recorded as [`Construct`]s
//! together with every simple assignment, which gives one hop of variable
//! resolution: `opt = SGD(lr=0.1)` followed by `compile(optimizer=opt)`
//! resolves the optimizer to the `SGD` line.

mod lexer;
mod syntax;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{FaultLabelSet, FaultType};
use crate::mutation::{
    canonical_optimizer_name, EpochSpec, LayerSpec, LossSpec, ModelSpec, OptimizerSpec,
};
use syntax::{Expr, ExprKind, Statement};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

pub const LAYER_NAMES: [&str; 32] = [
    "Dense",
    "Activation",
    "Dropout",
    "Flatten",
    "Reshape",
    "Conv1D",
    "Conv2D",
    "Conv3D",
    "Convolution1D",
    "Convolution2D",
    "SeparableConv2D",
    "Conv2DTranspose",
    "MaxPooling1D",
    "MaxPooling2D",
    "AveragePooling2D",
    "GlobalAveragePooling2D",
    "GlobalMaxPooling2D",
    "LSTM",
    "GRU",
    "SimpleRNN",
    "Bidirectional",
    "Embedding",
    "BatchNormalization",
    "Input",
    "InputLayer",
    "ReLU",
    "LeakyReLU",
    "PReLU",
    "ELU",
    "Softmax",
    "ThresholdedReLU",
    "TimeDistributed",
];

/// Layers whose only job is to apply a nonlinearity.
const ACTIVATION_LAYERS: [&str; 7] = [
    "Activation",
    "ReLU",
    "LeakyReLU",
    "PReLU",
    "ELU",
    "Softmax",
    "ThresholdedReLU",
];

const EXTRA_OPTIMIZERS: [&str; 4] = ["Nadam", "Adamax", "Ftrl", "AdamW"];

/// Layers whose first positional argument is the unit count.
const UNIT_LAYERS: [&str; 4] = ["Dense", "LSTM", "GRU", "SimpleRNN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstructKind {
    LayerCall,
    CompileCall,
    FitCall,
    OptimizerCtor,
    Assignment,
}

/// What an argument expression looks like, as far as localization cares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ValueShape {
    Str(String),
    Number(f64),
    Name(String),
    Call(String),
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgValue {
    pub text: String,
    pub line: usize,
    pub shape: ValueShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construct {
    pub kind: ConstructKind,
    /// Callee path for calls, target name for assignments.
    pub name: String,
    pub line: usize,
    pub args: Vec<ArgValue>,
    pub kwargs: BTreeMap<String, ArgValue>,
}

impl Construct {
    pub fn short_name(&self) -> &str {
        self.name.rsplit('.').next().unwrap_or(&self.name)
    }

    /// Keyword argument, falling back to a positional slot.
    fn arg(&self, keywords: &[&str], position: Option<usize>) -> Option<&ArgValue> {
        keywords
            .iter()
            .find_map(|k| self.kwargs.get(*k))
            .or_else(|| position.and_then(|p| self.args.get(p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub name: String,
    pub value: ArgValue,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramModel {
    pub constructs: Vec<Construct>,
    /// Every simple `name = value` assignment, in source order.
    pub bindings: Vec<Binding>,
    /// `None` when the script lacks a compile call or a recognizable loss.
    pub derived_spec: Option<ModelSpec>,
    pub warnings: Vec<String>,
}

fn shape_of(e: &Expr, source: &str) -> ValueShape {
    match &e.kind {
        ExprKind::Str(s) => ValueShape::Str(s.clone()),
        ExprKind::Number(n) => n
            .replace('_', "")
            .parse()
            .map(ValueShape::Number)
            .unwrap_or(ValueShape::Other),
        ExprKind::Path(p) if !p.contains('.') => ValueShape::Name(p.clone()),
        ExprKind::Call { callee, .. } => ValueShape::Call(callee.text(source).to_string()),
        _ => ValueShape::Other,
    }
}

fn arg_value(e: &Expr, source: &str) -> ArgValue {
    ArgValue {
        text: e.text(source).to_string(),
        line: e.line,
        shape: shape_of(e, source),
    }
}

fn is_optimizer_name(short: &str) -> bool {
    canonical_optimizer_name(short) == Some(short) || EXTRA_OPTIMIZERS.contains(&short)
}

fn classify_call(callee: &str) -> Option<ConstructKind> {
    let short = callee.rsplit('.').next().unwrap_or(callee);
    match short {
        "compile" => Some(ConstructKind::CompileCall),
        "fit" | "fit_generator" => Some(ConstructKind::FitCall),
        _ if is_optimizer_name(short) => Some(ConstructKind::OptimizerCtor),
        _ if LAYER_NAMES.contains(&short) => Some(ConstructKind::LayerCall),
        _ => None,
    }
}

fn collect_calls(e: &Expr, source: &str, out: &mut Vec<Construct>) {
    e.visit(&mut |node| {
        let ExprKind::Call {
            callee,
            args,
            kwargs,
        } = &node.kind
        else {
            return;
        };
        let name = callee.text(source);
        if let Some(kind) = classify_call(name) {
            out.push(Construct {
                kind,
                name: name.to_string(),
                line: node.line,
                args: args.iter().map(|a| arg_value(a, source)).collect(),
                kwargs: kwargs
                    .iter()
                    .map(|(k, v)| (k.clone(), arg_value(v, source)))
                    .collect(),
            });
        }
    });
}

/// Parses a training script. Only malformed strings and brackets are
/// fatal; unsupported statements are skipped and listed in `warnings`.
pub fn parse_program(source: &str) -> Result<ProgramModel, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let mut constructs = Vec::new();
    let mut bindings = Vec::new();
    let mut warnings = Vec::new();

    for stmt in syntax::parse_statements(&tokens) {
        match stmt {
            Statement::Import => {}
            Statement::Skipped { line, reason } => {
                warnings.push(format!("line {line}: skipped {reason}"));
            }
            Statement::Expr(e) => collect_calls(&e, source, &mut constructs),
            Statement::Assign {
                targets,
                value,
                line,
            } => {
                for t in &targets {
                    constructs.push(Construct {
                        kind: ConstructKind::Assignment,
                        name: t.text(source).to_string(),
                        line,
                        args: Vec::new(),
                        kwargs: BTreeMap::new(),
                    });
                    if let ExprKind::Path(p) = &t.kind {
                        if !p.contains('.') {
                            bindings.push(Binding {
                                name: p.clone(),
                                value: arg_value(&value, source),
                                line,
                            });
                        }
                    }
                }
                collect_calls(&value, source, &mut constructs);
            }
        }
    }

    let mut pm = ProgramModel {
        constructs,
        bindings,
        derived_spec: None,
        warnings,
    };
    pm.derived_spec = derive_spec(&pm);
    Ok(pm)
}

impl ProgramModel {
    pub fn constructs_of(&self, kind: ConstructKind) -> impl Iterator<Item = &Construct> {
        self.constructs.iter().filter(move |c| c.kind == kind)
    }

    /// Most recent assignment to `name` at or before `line`.
    pub fn binding_before(&self, name: &str, line: usize) -> Option<&Binding> {
        self.bindings
            .iter()
            .rev()
            .find(|b| b.name == name && b.line <= line)
    }

    /// Follows a bare variable one hop to its assignment.
    fn resolve<'a>(&'a self, v: &'a ArgValue) -> Resolved<'a> {
        if let ValueShape::Name(n) = &v.shape {
            if let Some(b) = self.binding_before(n, v.line) {
                return Resolved {
                    value: &b.value,
                    line: b.line,
                };
            }
        }
        Resolved { value: v, line: v.line }
    }

    fn optimizer_ctor_at(&self, line: usize, callee: &str) -> Option<&Construct> {
        self.constructs_of(ConstructKind::OptimizerCtor)
            .find(|c| c.line == line && c.name == callee)
    }
}

struct Resolved<'a> {
    value: &'a ArgValue,
    /// Where the value is lexically defined.
    line: usize,
}

/// How the optimizer of one compile call was found.
enum OptimizerSite<'a> {
    Ctor { line: usize, ctor: &'a Construct },
    Literal { line: usize, name: String },
    Opaque { line: usize, reason: String },
    Default { line: usize },
}

fn optimizer_site<'a>(pm: &'a ProgramModel, compile: &'a Construct) -> OptimizerSite<'a> {
    let Some(arg) = compile.arg(&["optimizer"], Some(0)) else {
        return OptimizerSite::Default { line: compile.line };
    };
    let r = pm.resolve(arg);
    match &r.value.shape {
        ValueShape::Call(callee) => match pm.optimizer_ctor_at(r.value.line, callee) {
            Some(ctor) => OptimizerSite::Ctor { line: r.line, ctor },
            None => OptimizerSite::Opaque {
                line: r.line,
                reason: format!("optimizer built by `{}`; not followed further", r.value.text),
            },
        },
        ValueShape::Str(s) => OptimizerSite::Literal {
            line: r.line,
            name: s.clone(),
        },
        _ => OptimizerSite::Opaque {
            line: r.line,
            reason: format!("optimizer `{}` could not be resolved", r.value.text),
        },
    }
}

fn layer_activation(c: &Construct) -> Option<&ArgValue> {
    if ACTIVATION_LAYERS.contains(&c.short_name()) {
        return c.args.first().or_else(|| c.kwargs.get("activation"));
    }
    let position = (c.short_name() == "Dense").then_some(1);
    c.arg(&["activation"], position)
}

fn derive_spec(pm: &ProgramModel) -> Option<ModelSpec> {
    let compile = pm.constructs_of(ConstructKind::CompileCall).next()?;
    let loss_arg = compile.arg(&["loss"], Some(1))?;
    let loss = pm.resolve(loss_arg);
    let ValueShape::Str(loss_name) = &loss.value.shape else {
        return None;
    };

    let layers = pm
        .constructs_of(ConstructKind::LayerCall)
        .map(|c| {
            let act = layer_activation(c);
            let units = if UNIT_LAYERS.contains(&c.short_name()) {
                c.arg(&["units", "output_dim"], Some(0))
                    .and_then(|a| match pm.resolve(a).value.shape {
                        ValueShape::Number(n) if n >= 0.0 && n.fract() == 0.0 => Some(n as u64),
                        _ => None,
                    })
            } else {
                None
            };
            LayerSpec {
                kind: c.short_name().to_string(),
                units,
                activation: act.and_then(|a| match &a.shape {
                    ValueShape::Str(s) => Some(s.clone()),
                    _ => None,
                }),
                source_line: Some(act.map_or(c.line, |a| a.line)),
            }
        })
        .collect();

    let number = |a: Option<&ArgValue>| {
        a.and_then(|a| match pm.resolve(a).value.shape {
            ValueShape::Number(n) => Some(n),
            _ => None,
        })
    };

    let optimizer = match optimizer_site(pm, compile) {
        OptimizerSite::Ctor { line, ctor } => OptimizerSpec {
            name: canonical_optimizer_name(ctor.short_name())
                .unwrap_or(ctor.short_name())
                .to_string(),
            learning_rate: number(ctor.arg(&["lr", "learning_rate"], Some(0))),
            source_line: Some(line),
        },
        OptimizerSite::Literal { line, name } => OptimizerSpec {
            name: canonical_optimizer_name(&name).map_or(name, str::to_string),
            learning_rate: None,
            source_line: Some(line),
        },
        OptimizerSite::Opaque { line, .. } => OptimizerSpec {
            name: "unknown".into(),
            learning_rate: None,
            source_line: Some(line),
        },
        OptimizerSite::Default { line } => OptimizerSpec {
            name: "RMSprop".into(),
            learning_rate: None,
            source_line: Some(line),
        },
    };

    let fit = pm.constructs_of(ConstructKind::FitCall).next();
    let epochs = match fit {
        Some(f) => {
            let arg = f.arg(&["epochs", "nb_epoch"], Some(3));
            EpochSpec {
                value: number(arg).map_or(1, |n| n.max(1.0) as u64),
                source_line: Some(arg.map_or(f.line, |a| pm.resolve(a).line)),
            }
        }
        None => EpochSpec {
            value: 1,
            source_line: None,
        },
    };
    let batch_size = fit
        .and_then(|f| number(f.arg(&["batch_size"], Some(2))))
        .filter(|n| *n >= 1.0)
        .map(|n| n as u64);

    Some(ModelSpec {
        id: String::new(),
        layers,
        loss: LossSpec {
            name: loss_name.clone(),
            source_line: Some(loss.line),
        },
        optimizer,
        epochs,
        batch_size,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unresolved {
    pub fault_type: FaultType,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub faults: BTreeMap<FaultType, BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<FaultType, Vec<String>>,
    #[serde(default)]
    pub unresolved: Vec<Unresolved>,
}

impl LocalizationReport {
    pub fn lines(&self, ty: FaultType) -> Option<&BTreeSet<usize>> {
        self.faults.get(&ty)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Default)]
struct Found {
    lines: BTreeSet<usize>,
    notes: Vec<String>,
    missing: Option<String>,
}

impl Found {
    fn note(&mut self, n: impl Into<String>) {
        let n = n.into();
        if !self.notes.contains(&n) {
            self.notes.push(n);
        }
    }
}

fn compiles(pm: &ProgramModel) -> Vec<&Construct> {
    pm.constructs_of(ConstructKind::CompileCall).collect()
}

fn locate_loss(pm: &ProgramModel) -> Found {
    let mut found = Found::default();
    let compiles = compiles(pm);
    if compiles.is_empty() {
        found.missing = Some("no compile call found".into());
    }
    for c in compiles {
        match c.arg(&["loss"], Some(1)) {
            Some(arg) => {
                found.lines.insert(pm.resolve(arg).line);
            }
            None => found.note(format!("compile call on line {} has no loss", c.line)),
        }
    }
    if found.lines.is_empty() && found.missing.is_none() {
        found.missing = Some("no loss argument found".into());
    }
    found
}

fn locate_optimizer(pm: &ProgramModel) -> Found {
    let mut found = Found::default();
    let compiles = compiles(pm);
    if compiles.is_empty() {
        found.missing = Some("no compile call found".into());
    }
    for c in compiles {
        match optimizer_site(pm, c) {
            OptimizerSite::Ctor { line, .. } | OptimizerSite::Literal { line, .. } => {
                found.lines.insert(line);
            }
            OptimizerSite::Opaque { line, reason } => {
                found.lines.insert(line);
                found.note(reason);
            }
            OptimizerSite::Default { line } => {
                found.lines.insert(line);
                found.note("default optimizer in use");
            }
        }
    }
    found
}

fn locate_lr(pm: &ProgramModel) -> Found {
    let mut found = Found::default();
    let compiles = compiles(pm);
    if compiles.is_empty() {
        found.missing = Some("no compile call found".into());
    }
    for c in compiles {
        match optimizer_site(pm, c) {
            OptimizerSite::Ctor { line, ctor } => match ctor.arg(&["lr", "learning_rate"], Some(0)) {
                Some(arg) => {
                    found.lines.insert(pm.resolve(arg).line);
                }
                None => {
                    found.lines.insert(line);
                    found.note("default learning rate in use");
                }
            },
            OptimizerSite::Literal { line, .. } | OptimizerSite::Default { line } => {
                found.lines.insert(line);
                found.note("default learning rate in use");
            }
            OptimizerSite::Opaque { reason, .. } => found.note(reason),
        }
    }
    if found.lines.is_empty() && found.missing.is_none() {
        found.missing = Some("learning rate could not be traced to a line".into());
    }
    found
}

fn locate_epoch(pm: &ProgramModel) -> Found {
    let mut found = Found::default();
    for f in pm.constructs_of(ConstructKind::FitCall) {
        match f.arg(&["epochs", "nb_epoch"], Some(3)) {
            Some(arg) => {
                found.lines.insert(pm.resolve(arg).line);
            }
            None => {
                found.lines.insert(f.line);
                found.note("default epoch count in use");
            }
        }
    }
    if found.lines.is_empty() {
        found.missing = Some("no fit call found".into());
    }
    found
}

fn locate_act(pm: &ProgramModel) -> Found {
    let mut found = Found::default();
    for c in &pm.constructs {
        if c.kind == ConstructKind::LayerCall && ACTIVATION_LAYERS.contains(&c.short_name()) {
            found.lines.insert(c.line);
        } else if c.kind != ConstructKind::Assignment {
            if let Some(a) = c.kwargs.get("activation") {
                found.lines.insert(a.line);
            } else if c.kind == ConstructKind::LayerCall && c.short_name() == "Dense" {
                if let Some(a) = c.args.get(1) {
                    found.lines.insert(a.line);
                }
            }
        }
    }
    if found.lines.is_empty() {
        found.missing = Some("no activation specified anywhere".into());
    }
    found
}

/// Maps each fault type in `faults` to the lines that define it. Types with
/// no matching construct are listed under `unresolved` instead.
pub fn localize(pm: &ProgramModel, faults: FaultLabelSet) -> LocalizationReport {
    let mut report = LocalizationReport::default();
    for ty in faults.iter() {
        let found = match ty {
            FaultType::Loss => locate_loss(pm),
            FaultType::Optimizer => locate_optimizer(pm),
            FaultType::Lr => locate_lr(pm),
            FaultType::Epoch => locate_epoch(pm),
            FaultType::Act => locate_act(pm),
        };
        if found.lines.is_empty() {
            report.unresolved.push(Unresolved {
                fault_type: ty,
                reason: found
                    .missing
                    .unwrap_or_else(|| "no matching construct".into()),
            });
        } else {
            report.faults.insert(ty, found.lines);
        }
        if !found.notes.is_empty() {
            report.notes.insert(ty, found.notes);
        }
    }
    report
}
