use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use anyhow::{anyhow, Context as _};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use tracefault::classifiers::{split_indices, EvaluationReport};
use tracefault::features::{aggregate, feature_names, read_feature_csv, write_feature_csv, DatasetError, FeatureRow, Operator};
use tracefault::mutation::{random_plan, seed_iteratively, MutationError, SeedingConfig};
use tracefault::*;

use crate::{Context, DiagnoseArgs, ExportDistArgs, ExtractArgs, KillCheckArgs, LocalizeArgs, SeedArgs, TrainArgs};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }

    pub fn usage_msg(msg: impl Into<String>) -> Self {
        Failure::usage(anyhow!(msg.into()))
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

type CmdResult = Result<(), Failure>;

/// Writes the artifact to `--output` or stdout, and the summary to whichever
/// stream the artifact did not take.
fn emit(ctx: &Context, artifact: &[u8], summary: &str) -> CmdResult {
    match &ctx.output {
        Some(path) => {
            write_file(path, artifact)?;
            if !summary.is_empty() {
                println!("{summary}");
            }
        }
        None => {
            std::io::stdout()
                .write_all(artifact)
                .context("cannot write to stdout")?;
            if !summary.is_empty() {
                eprintln!("{summary}");
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::usage)
}

fn json_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn thread_pool(ctx: &Context) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = ctx.jobs {
        b = b.num_threads(n);
    }
    b.build().context("cannot start worker threads")
}

/// Explicit trace arguments, or every `*.jsonl` in `paths.traces_dir`.
fn trace_inputs(ctx: &Context, given: Vec<PathBuf>) -> Result<Vec<PathBuf>, Failure> {
    if !given.is_empty() {
        return Ok(given);
    }
    let Some(dir) = &ctx.config.paths.traces_dir else {
        return Err(Failure::usage_msg("no trace files given"));
    };
    let mut found: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Failure::usage_msg(format!("no .jsonl traces in {}", dir.display())));
    }
    Ok(found)
}

type Featurized = (PathBuf, RunTrace, FeatureVector);

/// Parses, validates and featurizes traces in parallel. Unusable traces are
/// reported and left out.
fn featurize(ctx: &Context, paths: &[PathBuf]) -> anyhow::Result<(Vec<Featurized>, Vec<String>)> {
    let pool = thread_pool(ctx)?;
    let cfg = &ctx.config.indicators;
    let results: Vec<Result<Featurized, String>> = pool.install(|| {
        paths
            .par_iter()
            .map(|path| {
                let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let trace = parse_trace_file(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
                let report = validate_trace(&trace);
                if let Some(issue) = report.errors().next() {
                    return Err(format!("{}: invalid trace: {issue:?}", path.display()));
                }
                let matrix = compute_indicators(&trace, cfg).map_err(|e| format!("{}: {e}", path.display()))?;
                let features = extract_features(&matrix);
                Ok((path.clone(), trace, features))
            })
            .collect()
    });
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(msg) => {
                eprintln!("warning: skipping {msg}");
                skipped.push(msg);
            }
        }
    }
    Ok((ok, skipped))
}

pub fn extract(ctx: &Context, args: ExtractArgs) -> CmdResult {
    let paths = trace_inputs(ctx, args.traces)?;
    let labels: Option<BTreeMap<String, FaultLabelSet>> = match &args.labels {
        Some(p) => Some(
            serde_json::from_str(&read_text(p)?)
                .with_context(|| format!("invalid labels file {}", p.display()))
                .map_err(Failure::usage)?,
        ),
        None => None,
    };
    let (done, skipped) = featurize(ctx, &paths)?;
    if done.is_empty() {
        return Err(Failure::usage_msg("none of the traces could be read"));
    }
    let mut rows = Vec::with_capacity(done.len());
    for (path, trace, features) in done {
        let row_labels = match &labels {
            Some(map) => {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let found = map.get(&trace.run_id).or_else(|| map.get(&stem)).copied();
                if found.is_none() {
                    eprintln!("warning: no labels for run `{}`; recorded as fault-free", trace.run_id);
                }
                Some(found.unwrap_or_default())
            }
            None => None,
        };
        rows.push(FeatureRow {
            run_id: trace.run_id,
            features,
            labels: row_labels,
        });
    }
    let mut csv = Vec::new();
    write_feature_csv(&mut csv, &rows, labels.is_some()).map_err(|e| anyhow!(e))?;
    let summary = format!("extracted {} trace(s), skipped {}", rows.len(), skipped.len());
    emit(ctx, &csv, &summary)
}

fn load_labeled(path: &Path) -> Result<Vec<LabeledSample>, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::usage)?;
    let rows = read_feature_csv(file, true).map_err(|e| match e {
        DatasetError::Schema(_) => Failure::usage(anyhow!("{}: {e}", path.display())),
        DatasetError::Csv(_) => Failure::from(anyhow!("{}: {e}", path.display())),
    })?;
    Ok(rows
        .into_iter()
        .map(|r| LabeledSample {
            features: r.features,
            labels: r.labels.unwrap_or_default(),
            origin_id: r.run_id,
        })
        .collect())
}

#[derive(Serialize)]
struct TrainSummary {
    samples: usize,
    train: usize,
    held_out: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<EvaluationReport>,
}

pub fn train(ctx: &Context, args: TrainArgs) -> CmdResult {
    let data = load_labeled(&args.features)?;
    let cfg = &ctx.config;
    let (train_idx, held_idx) = split_indices(data.len(), cfg.train_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> Vec<LabeledSample> { idx.iter().map(|&i| data[i].clone()).collect() };
    let (train_set, held_set) = (pick(&train_idx), pick(&held_idx));
    let bundle = train_diagnosers(&train_set, &cfg.classifier, cfg.seed)
        .map_err(|e| Failure::usage(anyhow!("cannot train: {e}")))?;
    let metrics = if held_set.is_empty() {
        eprintln!("warning: held-out split is empty; no metrics computed");
        None
    } else {
        Some(evaluate(&bundle, &held_set).map_err(|e| anyhow!(e))?)
    };
    let summary = TrainSummary {
        samples: data.len(),
        train: train_set.len(),
        held_out: held_set.len(),
        seed: cfg.seed,
        metrics,
    };
    let bundle_path = ctx.output.clone().unwrap_or_else(|| match &cfg.paths.output_dir {
        Some(dir) => dir.join("bundle.json"),
        None => PathBuf::from("bundle.json"),
    });
    let mut text = bundle.to_json();
    text.push('\n');
    write_file(&bundle_path, text.as_bytes())?;
    let report = json_line(&summary);
    if let Some(p) = &args.metrics {
        write_file(p, &report)?;
    }
    std::io::stdout().write_all(&report).context("cannot write to stdout")?;
    if let Some(m) = &summary.metrics {
        eprintln!(
            "bundle written to {}; held-out exact match {:.3} (knn {:.3}, tree {:.3}, forest {:.3})",
            bundle_path.display(),
            m.ensemble.exact_match_accuracy,
            m.knn.exact_match_accuracy,
            m.tree.exact_match_accuracy,
            m.forest.exact_match_accuracy
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct FaultEntry {
    fault: FaultType,
    #[serde(skip_serializing_if = "Option::is_none")]
    lines: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    faults: Vec<FaultEntry>,
    diagnosis: DiagnosisReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    localization: Option<LocalizationReport>,
    warnings: Vec<String>,
}

fn title(ty: FaultType) -> &'static str {
    match ty {
        FaultType::Loss => "Loss",
        FaultType::Optimizer => "Optimizer",
        FaultType::Lr => "Lr",
        FaultType::Epoch => "Epoch",
        FaultType::Act => "Act",
    }
}

fn load_program(path: &Path) -> Result<ProgramModel, Failure> {
    let source = read_text(path)?;
    parse_program(&source).map_err(|e| Failure::usage(anyhow!("{}: line {}: {}", path.display(), e.line, e.message)))
}

pub fn diagnose(ctx: &Context, args: DiagnoseArgs) -> CmdResult {
    let bundle_path = args
        .bundle
        .or_else(|| ctx.config.paths.bundle.clone())
        .ok_or_else(|| Failure::usage_msg("--bundle is required"))?;
    let bundle = DiagnoserBundle::from_json(&read_text(&bundle_path)?)
        .map_err(|e| Failure::usage(anyhow!("{}: {e}", bundle_path.display())))?;
    let program = match args.program.or_else(|| ctx.config.paths.program.clone()) {
        Some(p) => Some(load_program(&p)?),
        None => None,
    };
    let paths = trace_inputs(ctx, args.traces)?;
    let (done, skipped) = featurize(ctx, &paths)?;
    if done.is_empty() {
        return Err(Failure::usage_msg("none of the traces could be read"));
    }
    let mut warnings = skipped;
    if done.len() < ctx.config.runs_per_program {
        let w = format!(
            "only {} run(s) available; {} expected",
            done.len(),
            ctx.config.runs_per_program
        );
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let runs: Vec<FeatureVector> = done.into_iter().map(|(_, _, f)| f).collect();
    let report = tracefault::diagnose(&bundle, &runs).map_err(|e| Failure::usage(anyhow!(e)))?;
    let localization = program.as_ref().map(|pm| {
        warnings.extend(pm.warnings.iter().cloned());
        tracefault::localize(pm, report.final_labels)
    });

    let mut faults = Vec::new();
    let mut summary = Vec::new();
    for (i, ty) in report.final_labels.iter().enumerate() {
        let lines = localization
            .as_ref()
            .map(|l| l.lines(ty).map(|s| s.iter().copied().collect()).unwrap_or_default());
        match &lines {
            Some(ls) => summary.push(format!("Fault {}: [{}] Lines: {:?}", i + 1, title(ty), ls)),
            None => summary.push(format!("Fault {}: [{}]", i + 1, title(ty))),
        }
        faults.push(FaultEntry { fault: ty, lines });
    }
    if summary.is_empty() {
        summary.push("No fault detected".into());
    }
    let out = DiagnoseOutput {
        faults,
        diagnosis: report,
        localization,
        warnings,
    };
    emit(ctx, &json_line(&out), &summary.join("\n"))
}

pub fn localize(ctx: &Context, args: LocalizeArgs) -> CmdResult {
    let faults: FaultLabelSet = args
        .faults
        .parse()
        .map_err(|e| Failure::usage(anyhow!("--faults: {e}")))?;
    let pm = load_program(&args.program)?;
    for w in &pm.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &args.spec_out {
        match &pm.derived_spec {
            Some(spec) => write_file(p, format!("{}\n", spec.to_json()).as_bytes())?,
            None => return Err(anyhow!("cannot derive a model spec from {}", args.program.display()).into()),
        }
    }
    let report = tracefault::localize(&pm, faults);
    let summary: Vec<String> = report
        .faults
        .iter()
        .enumerate()
        .map(|(i, (ty, lines))| format!("Fault {}: [{}] Lines: {:?}", i + 1, title(*ty), lines.iter().collect::<Vec<_>>()))
        .collect();
    emit(ctx, format!("{}\n", report.to_json()).as_bytes(), &summary.join("\n"))
}

/// Runs the evaluator program once per spec: spec JSON on stdin, accuracies
/// as a JSON array on stdout.
fn external_evaluator(program: PathBuf, extra: Vec<String>, seed: u64) -> impl FnMut(&ModelSpec, usize) -> Result<AccuracySamples, String> {
    move |spec: &ModelSpec, repetitions: usize| {
        let mut child = Command::new(&program)
            .args(&extra)
            .env("TRACEFAULT_REPETITIONS", repetitions.to_string())
            .env("TRACEFAULT_SEED", seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot run {}: {e}", program.display()))?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(spec.to_json().as_bytes())
            .map_err(|e| format!("cannot send spec: {e}"))?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("evaluator exited with {}", out.status));
        }
        let samples: AccuracySamples = serde_json::from_slice(&out.stdout)
            .map_err(|e| format!("evaluator output is not an accuracy array: {e}"))?;
        AccuracySamples::new(samples.values().to_vec()).map_err(|e| e.to_string())
    }
}

pub fn seed(ctx: &Context, args: SeedArgs) -> CmdResult {
    let spec: ModelSpec = serde_json::from_str(&read_text(&args.spec)?)
        .with_context(|| format!("invalid model spec {}", args.spec.display()))
        .map_err(Failure::usage)?;
    spec.validate().map_err(|e| Failure::usage(anyhow!(e)))?;
    let seeding = SeedingConfig {
        max_types: args.max_types.unwrap_or(ctx.config.seeding.max_types),
        repetitions: args.repetitions.unwrap_or(ctx.config.seeding.repetitions),
        ..ctx.config.seeding
    };
    if !(1..=5).contains(&seeding.max_types) {
        return Err(Failure::usage_msg("--max-types must be in 1..=5"));
    }
    if seeding.repetitions < 2 {
        return Err(Failure::usage_msg("--repetitions must be >= 2"));
    }
    let seed = ctx.config.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map_err = |e: MutationError| -> Failure {
        match e {
            MutationError::EvaluatorFailure { .. } => anyhow!(e).into(),
            other => Failure::usage(anyhow!(other)),
        }
    };
    match args.evaluator {
        None => {
            let (mutated, plan) = random_plan(&spec, seeding.max_types, &mut rng, seed).map_err(map_err)?;
            let summary = format!("seeded {} without a kill check", plan.fault_types());
            emit(ctx, &json_line(&serde_json::json!({"spec": mutated, "plan": plan})), &summary)
        }
        Some(program) => {
            let mut evaluator = external_evaluator(program, args.evaluator_args, seed);
            let mutants = seed_iteratively(&spec, &mut evaluator, &mut rng, seed, &seeding).map_err(map_err)?;
            let summary = match mutants.last() {
                Some(m) => format!("{} kill-confirmed mutant(s); deepest carries {}", mutants.len(), m.labels),
                None => "no mutant was killed".to_string(),
            };
            emit(ctx, &json_line(&mutants), &summary)
        }
    }
}

fn load_samples(path: &Path) -> Result<AccuracySamples, Failure> {
    let raw: Vec<f64> = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("{} is not a JSON array of accuracies", path.display()))
        .map_err(Failure::usage)?;
    AccuracySamples::new(raw).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
}

pub fn kill_check(ctx: &Context, args: KillCheckArgs) -> CmdResult {
    let orig = load_samples(&args.original)?;
    let mutant = load_samples(&args.mutant)?;
    let alpha = args.alpha.unwrap_or(ctx.config.alpha);
    let beta = args.beta.unwrap_or(ctx.config.beta);
    if !(alpha > 0.0 && alpha < 1.0) || !(beta >= 0.0 && beta.is_finite()) {
        return Err(Failure::usage_msg("alpha must be in (0, 1) and beta >= 0"));
    }
    let v = is_kill(&orig, &mutant, alpha, beta).map_err(|e| Failure::usage(anyhow!(e)))?;
    let summary = format!(
        "{} (d = {:.4}, p = {:.4})",
        if v.killed { "killed" } else { "survived" },
        v.effect_size,
        v.p_value
    );
    emit(ctx, &json_line(&v), &summary)
}

#[derive(Serialize)]
struct GroupStats {
    n: usize,
    mean: f64,
    std: f64,
    min: f64,
    median: f64,
    max: f64,
}

fn group_stats(values: &[f64]) -> GroupStats {
    let o = aggregate(values);
    GroupStats {
        n: values.len(),
        mean: o.get(Operator::Mean),
        std: o.get(Operator::Std),
        min: o.get(Operator::Min),
        median: o.get(Operator::Median),
        max: o.get(Operator::Max),
    }
}

pub fn export_dist(ctx: &Context, args: ExportDistArgs) -> CmdResult {
    let label: FaultType = args
        .label
        .parse()
        .map_err(|e| Failure::usage(anyhow!("--label: {e}")))?;
    let data = load_labeled(&args.features)?;
    let (faulty, clean): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
        data.iter().partition(|s| s.labels.contains(label));
    let mut w = Vec::new();
    {
        let mut out = std::io::Cursor::new(&mut w);
        let stats = ["n", "mean", "std", "min", "median", "max"];
        let mut header = vec!["feature".to_string()];
        for group in ["faulty", "clean"] {
            header.extend(stats.iter().map(|s| format!("{group}_{s}")));
        }
        writeln!(out, "{}", header.join(",")).context("write failed")?;
        for (j, name) in feature_names().iter().enumerate() {
            let mut cells = vec![name.clone()];
            for group in [&faulty, &clean] {
                let col: Vec<f64> = group.iter().map(|s| s.features.0[j]).collect();
                let g = group_stats(&col);
                cells.push(g.n.to_string());
                for v in [g.mean, g.std, g.min, g.median, g.max] {
                    cells.push(v.to_string());
                }
            }
            writeln!(out, "{}", cells.join(",")).context("write failed")?;
        }
    }
    let summary = format!(
        "{} rows with `{}`, {} without",
        faulty.len(),
        label.name(),
        clean.len()
    );
    emit(ctx, &w, &summary)
}
