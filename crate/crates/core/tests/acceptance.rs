//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::oracle::{brute_aggregate, close, exhaustive_knn, textbook_cohens_d, textbook_pooled_t_p};
use common::{read_fixture, PROGRAM_FIXTURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracefault::classifiers::{split_indices, DecisionTree, ForestParams, KnnModel, TreeParams};
use tracefault::features::{aggregate, feature_names};
use tracefault::indicators::Indicator;
use tracefault::features::Operator;
use tracefault::mutation::{
    apply_operator, categorize_loss, random_plan, EpochSpec, LayerSpec, LossSpec, ModelSpec,
    MutationError, OperatorKind, OptimizerSpec, CLASSIFICATION_LOSSES, REGRESSION_LOSSES,
};
use tracefault::synth::{synth_corpus, synth_trace, SynthConfig};
use tracefault::*;

type Outcome = Result<String, String>;

type Rule = Box<dyn Fn(&[f64]) -> bool>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn features_of(trace: &RunTrace) -> FeatureVector {
    extract_features(&compute_indicators(trace, &IndicatorConfig::default()).unwrap())
}

fn feature_dimensionality() -> Outcome {
    let expected: Vec<String> = Indicator::ALL
        .iter()
        .flat_map(|i| Operator::ALL.iter().map(move |o| format!("ft_{}_{}", i.name(), o.name())))
        .collect();
    ensure(feature_names() == expected, || "feature names out of canonical order".into())?;
    ensure(expected.len() == 160, || format!("{} names", expected.len()))?;

    let mut traces: Vec<RunTrace> = synth_corpus(40, 5, &SynthConfig::default())
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    traces.push(synth_trace(
        FaultLabelSet::all(),
        1,
        &SynthConfig {
            nan_loss_at: Some(2),
            ..SynthConfig::default()
        },
    ));
    traces.push(synth_trace(
        FaultLabelSet::empty(),
        2,
        &SynthConfig {
            full_length: (2, 2),
            ..SynthConfig::default()
        },
    ));
    traces.push(synth_trace(
        "lr,act".parse().unwrap(),
        3,
        &SynthConfig {
            full_length: (5000, 5000),
            layers: 8,
            ..SynthConfig::default()
        },
    ));
    let mut all_nan = synth_trace(FaultLabelSet::empty(), 4, &SynthConfig::default());
    for r in &mut all_nan.records {
        r.loss = f64::NAN;
        r.val_loss = None;
    }
    traces.push(all_nan);

    let mut slowest = Duration::ZERO;
    for t in &traces {
        let start = Instant::now();
        let fv = features_of(t);
        slowest = slowest.max(start.elapsed());
        ensure(fv.len() == 160, || format!("{}: {} features", t.run_id, fv.len()))?;
        ensure(fv.0.iter().all(|v| v.is_finite()), || format!("{}: non-finite feature", t.run_id))?;
    }
    ensure(slowest < Duration::from_secs(1), || format!("slowest trace took {slowest:?}"))?;
    Ok(format!(
        "{} traces -> 160 features each, slowest {:.1} ms (longest trace 5000 intervals)",
        traces.len(),
        slowest.as_secs_f64() * 1e3
    ))
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let centre = rng.random_range(0.2..0.9);
    let spread = rng.random_range(0.001..0.2);
    (0..n).map(|_| centre + spread * rng.random_range(-1.0..1.0)).collect()
}

fn statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cases = 200;
    let mut worst_moment: f64 = 0.0;
    for case in 0..cases {
        let n = rng.random_range(1..120);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let mut seq: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        if case % 7 == 0 {
            seq[0] = f64::NAN;
        }
        if case % 11 == 0 && n > 3 {
            seq[1] = seq[2];
        }
        let got = aggregate(&seq).0;
        let want = brute_aggregate(&seq);
        for (op, (g, w)) in got.iter().zip(want).enumerate() {
            ensure(close(*g, w, 1e-9), || format!("aggregate case {case} op {op}: {g} vs {w}"))?;
            worst_moment = worst_moment.max((g - w).abs() / (1.0 + w.abs()));
        }
    }

    let mut worst_p: f64 = 0.0;
    for case in 0..cases {
        let na = rng.random_range(2..40);
        let nb = rng.random_range(2..40);
        let a = random_samples(&mut rng, na);
        let b = random_samples(&mut rng, nb);
        let (sa, sb) = (
            AccuracySamples::new(a.clone()).unwrap(),
            AccuracySamples::new(b.clone()).unwrap(),
        );
        let d = cohens_d(&sa, &sb).unwrap();
        let d_ref = textbook_cohens_d(&a, &b);
        ensure(close(d, d_ref, 1e-9), || format!("cohens_d case {case}: {d} vs {d_ref}"))?;
        let p = glm_p_value(&sa, &sb).unwrap();
        let p_ref = textbook_pooled_t_p(&a, &b);
        ensure((p - p_ref).abs() <= 1e-6, || format!("p case {case}: {p} vs {p_ref}"))?;
        worst_p = worst_p.max((p - p_ref).abs());
    }
    Ok(format!(
        "{cases} aggregate + {cases} two-sample cases; max moment rel err {worst_moment:.1e}, max p err {worst_p:.1e}"
    ))
}

fn classifier_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let dim = 6;
    let grid = |rng: &mut ChaCha8Rng| (rng.random_range(0..4) as f64) / 4.0;
    let points: Vec<Vec<f64>> = (0..120).map(|_| (0..dim).map(|_| grid(&mut rng)).collect()).collect();
    let labels: Vec<FaultLabelSet> = (0..120)
        .map(|_| FaultLabelSet::from_bools(std::array::from_fn(|_| rng.random_bool(0.4))))
        .collect();
    for k in [1, 3, 5, 8] {
        let model = KnnModel::fit(points.clone(), labels.clone(), k).unwrap();
        for q in 0..200 {
            let query: Vec<f64> = (0..dim).map(|_| grid(&mut rng)).collect();
            let got = model.predict(&query).unwrap();
            let want = exhaustive_knn(&points, &labels, k, &query);
            ensure(got == want, || format!("knn k={k} query {q}: {got} vs {want}"))?;
        }
    }

    let separable: Vec<(&str, Rule)> = vec![
        ("threshold", Box::new(|x: &[f64]| x[0] > 0.3)),
        ("xor", Box::new(|x: &[f64]| (x[0] > 0.5) != (x[1] > 0.5))),
        ("box", Box::new(|x: &[f64]| x[2] > 0.2 && x[2] < 0.7 && x[3] < 0.4)),
        ("diagonal", Box::new(|x: &[f64]| x[0] + x[1] > 1.0)),
    ];
    for (name, rule) in &separable {
        let rows: Vec<Vec<f64>> = (0..150).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let targets: Vec<bool> = rows.iter().map(|r| rule(r)).collect();
        let params = TreeParams {
            max_depth: 64,
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&rows, &targets, &params).unwrap();
        let correct = rows.iter().zip(&targets).filter(|(r, t)| tree.predict(r).unwrap() == **t).count();
        ensure(correct == rows.len(), || format!("tree on {name}: {correct}/{}", rows.len()))?;
    }

    let corpus = synth_corpus(60, 31, &SynthConfig::default());
    let samples: Vec<LabeledSample> = corpus
        .iter()
        .map(|(t, l)| LabeledSample {
            features: features_of(t),
            labels: *l,
            origin_id: t.run_id.clone(),
        })
        .collect();
    let config = TrainConfig {
        forest: ForestParams::default(),
        ..TrainConfig::default()
    };
    let first = train_diagnosers(&samples, &config, 99).unwrap().to_json();
    let second = train_diagnosers(&samples, &config, 99).unwrap().to_json();
    ensure(first == second, || "forest bundles differ across runs".into())?;
    Ok(format!(
        "knn matched exhaustive scan on 800 queries (k = 1, 3, 5, 8); tree 100% on {} separable fixtures; {}-byte bundle identical across runs",
        separable.len(),
        first.len()
    ))
}

fn kill_check() -> Outcome {
    let (alpha, beta) = (0.2, 0.05);
    let base: Vec<f64> = (0..20).map(|i| 0.9 + 0.01 * ((i % 5) as f64 - 2.0)).collect();
    let same = AccuracySamples::new(base.clone()).unwrap();
    let v = is_kill(&same, &same, alpha, beta).unwrap();
    ensure(!v.killed, || format!("identical samples killed: {v:?}"))?;

    let worse = AccuracySamples::new(base.iter().map(|x| x - 0.5).collect()).unwrap();
    let v = is_kill(&same, &worse, alpha, beta).unwrap();
    ensure(v.killed, || format!("mean gap 0.5 not killed: {v:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut killed = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..30);
        let a = random_samples(&mut rng, n);
        let b = random_samples(&mut rng, n);
        let (sa, sb) = (AccuracySamples::new(a.clone()).unwrap(), AccuracySamples::new(b.clone()).unwrap());
        let v = is_kill(&sa, &sb, alpha, beta).unwrap();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let expected = textbook_cohens_d(&a, &b) >= beta && textbook_pooled_t_p(&a, &b) < alpha && mb < ma;
        ensure(v.killed == expected, || format!("case {case}: verdict {v:?}, oracle says {expected}"))?;
        ensure(v.killed == (v.effect_size >= beta && v.p_value < alpha && v.mutant_worse), || {
            format!("case {case}: verdict inconsistent with its own fields {v:?}")
        })?;
        killed += v.killed as usize;
    }
    Ok(format!("identical -> survives, gap 0.5 -> killed; 1000 random pairs consistent ({killed} killed)"))
}

fn base_spec(epochs: u64, loss: &str) -> ModelSpec {
    ModelSpec {
        id: "base".into(),
        layers: vec![LayerSpec {
            kind: "Dense".into(),
            units: Some(4),
            activation: Some("relu".into()),
            source_line: Some(3),
        }],
        loss: LossSpec {
            name: loss.into(),
            source_line: Some(5),
        },
        optimizer: OptimizerSpec {
            name: "Adam".into(),
            learning_rate: Some(0.001),
            source_line: Some(4),
        },
        epochs: EpochSpec {
            value: epochs,
            source_line: Some(6),
        },
        batch_size: None,
    }
}

fn mutation_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let draws = 10_000;
    let all_losses: Vec<&str> = CLASSIFICATION_LOSSES.iter().chain(&REGRESSION_LOSSES).copied().collect();
    for i in 0..draws {
        let e = rng.random_range(1..=20_000u64);
        let loss = all_losses[i % all_losses.len()];
        let spec = base_spec(e, loss);
        match apply_operator(&spec, OperatorKind::EpochDecrease, &mut rng) {
            Ok((m, _)) => {
                let (lo, hi) = ((e / 50).max(1), (e / 10).max(1));
                ensure((lo..=hi).contains(&m.epochs.value), || {
                    format!("epochs {e} -> {} outside [{lo}, {hi}]", m.epochs.value)
                })?;
            }
            Err(MutationError::NoMutableTarget(_)) => ensure(e == 1, || format!("epochs {e} not mutable"))?,
            Err(other) => return Err(other.to_string()),
        }
        let (m, _) = apply_operator(&spec, OperatorKind::LrDecrease, &mut rng).unwrap();
        let lr = m.optimizer.learning_rate.unwrap();
        ensure((1e-16..=1e-10).contains(&lr), || format!("LrDecrease gave {lr}"))?;
        let (m, _) = apply_operator(&spec, OperatorKind::LrIncrease, &mut rng).unwrap();
        let lr = m.optimizer.learning_rate.unwrap();
        ensure((1.0..=10.0).contains(&lr), || format!("LrIncrease gave {lr}"))?;
        let (m, _) = apply_operator(&spec, OperatorKind::LossCrossCategory, &mut rng).unwrap();
        ensure(categorize_loss(&m.loss.name) != categorize_loss(loss), || {
            format!("loss {loss} -> {} stayed in category", m.loss.name)
        })?;
        let (_, plan) = random_plan(&spec, rng.random_range(1..=5), &mut rng, i as u64).unwrap();
        ensure(plan.is_well_formed(), || format!("plan repeats a fault type: {plan:?}"))?;
    }
    Ok(format!("{draws} draws each of epoch/lr-/lr+/loss operators and random plans within bounds"))
}

fn localization() -> Outcome {
    let listing = read_fixture("listing1_xor.py");
    let r = localize(&parse_program(&listing).unwrap(), "lr,loss,epoch,act".parse().unwrap());
    let got: Vec<(FaultType, Vec<usize>)> = r
        .faults
        .iter()
        .map(|(t, l)| (*t, l.iter().copied().collect()))
        .collect();
    let want = vec![
        (FaultType::Loss, vec![16]),
        (FaultType::Lr, vec![13]),
        (FaultType::Epoch, vec![17]),
        (FaultType::Act, vec![6, 10]),
    ];
    ensure(got == want, || format!("listing fixture: {got:?}"))?;

    let mut others = 0;
    for fx in PROGRAM_FIXTURES {
        let src = read_fixture(fx.file);
        let report = localize(&parse_program(&src).unwrap(), FaultLabelSet::all());
        for (ty, lines) in fx.lines {
            let got: Vec<usize> = report.lines(*ty).map(|s| s.iter().copied().collect()).unwrap_or_default();
            ensure(got == *lines, || format!("{}: {ty:?} -> {got:?}, expected {lines:?}", fx.file))?;
        }
        let unresolved: Vec<FaultType> = report.unresolved.iter().map(|u| u.fault_type).collect();
        ensure(unresolved == fx.unresolved, || format!("{}: unresolved {unresolved:?}", fx.file))?;

        let moved = localize(&parse_program(&format!("\n{src}")).unwrap(), FaultLabelSet::all());
        for (ty, lines) in &report.faults {
            let shifted: Vec<usize> = lines.iter().map(|l| l + 1).collect();
            let got: Vec<usize> = moved.lines(*ty).map(|s| s.iter().copied().collect()).unwrap_or_default();
            ensure(got == shifted, || format!("{}: {ty:?} not translation invariant", fx.file))?;
        }
        if fx.file != "listing1_xor.py" {
            others += 1;
        }
    }
    ensure(others >= 10, || format!("only {others} additional fixtures"))?;
    Ok(format!("listing fixture exact; {others} additional fixtures exact and translation invariant"))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let seed = 2024;
    let corpus = synth_corpus(200, seed, &SynthConfig::default());
    let samples: Vec<LabeledSample> = corpus
        .iter()
        .map(|(t, l)| LabeledSample {
            features: features_of(t),
            labels: *l,
            origin_id: t.run_id.clone(),
        })
        .collect();
    let (train_idx, test_idx) = split_indices(samples.len(), 0.7, seed);
    let train: Vec<LabeledSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let test: Vec<LabeledSample> = test_idx.iter().map(|&i| samples[i].clone()).collect();
    let bundle = train_diagnosers(&train, &TrainConfig::default(), seed).map_err(|e| e.to_string())?;
    let report = evaluate(&bundle, &test).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let acc = report.ensemble.exact_match_accuracy;
    let summary = format!(
        "{} traces, {}/{} split, exact match {:.3} (knn {:.3}, tree {:.3}, forest {:.3}) in {:.1} s",
        samples.len(),
        train.len(),
        test.len(),
        acc,
        report.knn.exact_match_accuracy,
        report.tree.exact_match_accuracy,
        report.forest.exact_match_accuracy,
        elapsed.as_secs_f64()
    );
    ensure(acc >= 0.90, || summary.clone())?;
    ensure(elapsed < Duration::from_secs(120), || summary.clone())?;
    Ok(summary)
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 7] = [
        ("feature dimensionality", feature_dimensionality),
        ("statistics oracle", statistics_oracle),
        ("classifier oracle", classifier_oracle),
        ("kill check", kill_check),
        ("mutation bounds", mutation_bounds),
        ("localization fixtures", localization),
        ("end-to-end synthetic pipeline", end_to_end),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
