use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use memotion_core::dataset::store::{load_store, rejects_path, split_path, write_records, write_rejects};
use memotion_core::dataset::{
    preprocess_split, verify_split_counts, ClassWeights, DatasetSchema, MemeRecord, Split, Subtask,
};
use memotion_core::experiments::{evaluation_split, run_comparison, ComparisonPlan, ModelVariant};
use memotion_core::fusion::{BuildOptions, FusionNetwork};
use memotion_core::metrics::{aggregate, EvaluationReport};
use memotion_core::trainer::{
    self, embed_records, evaluate_features, usable_records, ConfigOverrides, EpochRecord, TrainOptions,
    TrainingConfig,
};

use crate::manifest::{run_timestamp, write_json, RunManifest, MANIFEST_FILE};
use crate::{CompareArgs, EvaluateArgs, GlobalArgs, PredictArgs, PreprocessArgs, Status, TrainArgs, VerifyArgs};

const NO_PRESET: &str = "none";
const CHECKPOINT_FILE: &str = "best.safetensors";

fn out_dir(g: &GlobalArgs, command: &str) -> PathBuf {
    g.out_dir.clone().unwrap_or_else(|| Path::new("runs").join(command))
}

fn overrides(g: &GlobalArgs) -> anyhow::Result<Option<ConfigOverrides>> {
    g.config
        .as_deref()
        .map(ConfigOverrides::from_file)
        .transpose()
        .context("reading training config")
}

fn effective_seed(g: &GlobalArgs, overrides: Option<&ConfigOverrides>) -> u64 {
    g.seed.or_else(|| overrides.and_then(ConfigOverrides::seed)).unwrap_or(42)
}

fn manifest(g: &GlobalArgs, command: &str, preset: &str, seed: u64, inputs: &[&Path], out: &Path) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config_preset: preset.to_string(),
        seed,
        input_paths: inputs.iter().map(|p| p.to_path_buf()).collect(),
        output_dir: out.to_path_buf(),
        timestamp: run_timestamp(g.toy_encoders),
    }
}

fn parse_tasks(spec: &[String]) -> anyhow::Result<Vec<Subtask>> {
    if spec.is_empty() || (spec.len() == 1 && spec[0].eq_ignore_ascii_case("all")) {
        return Ok(Subtask::ALL.to_vec());
    }
    let mut tasks = Vec::new();
    for s in spec {
        let t: Subtask = s.parse().map_err(|e: String| anyhow!(memotion_core::Error::Config(e)))?;
        if !tasks.contains(&t) {
            tasks.push(t);
        }
    }
    Ok(tasks)
}

fn split_of(store: &BTreeMap<Split, Vec<MemeRecord>>, split: Split) -> anyhow::Result<&[MemeRecord]> {
    match store.get(&split) {
        Some(r) if !r.is_empty() => Ok(r),
        _ => Err(anyhow!(memotion_core::Error::Config(format!("record store has no {split} split")))),
    }
}

pub(crate) fn preprocess(g: &GlobalArgs, a: &PreprocessArgs) -> anyhow::Result<Status> {
    let out = out_dir(g, "preprocess");
    let mut inputs = vec![a.csv.as_path(), a.images.as_path()];
    if let Some(s) = &a.schema {
        inputs.push(s);
    }
    let seed = effective_seed(g, None);
    manifest(g, "preprocess", NO_PRESET, seed, &inputs, &out).write(&format!("manifest.{}.json", a.split))?;

    let schema = match &a.schema {
        Some(p) => DatasetSchema::from_file(p)?,
        None => DatasetSchema::default(),
    };
    let loaded = preprocess_split(&a.csv, &a.images, a.split, &schema, !a.skip_image_check)?;
    write_records(&split_path(&out, a.split), &loaded.records)?;
    write_rejects(&rejects_path(&out, a.split), &loaded.rejects)?;
    let manual: Vec<&str> = loaded
        .records
        .iter()
        .filter(|r| r.needs_manual_text)
        .map(|r| r.id.as_str())
        .collect();
    let manual_path = out.join(format!("{}.needs_manual_text.txt", a.split));
    let mut text = manual.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(&manual_path, text).with_context(|| format!("writing {}", manual_path.display()))?;

    let n_rej = loaded.rejects.rejects.len();
    if n_rej > 0 {
        log::warn!(
            "{n_rej} row(s) rejected, see {}",
            rejects_path(&out, a.split).display()
        );
    }
    println!(
        "{}: {} records, {} rejected, {} need manual text -> {}",
        a.split,
        loaded.records.len(),
        n_rej,
        manual.len(),
        out.display()
    );
    Ok(Status::Success)
}

pub(crate) fn verify(g: &GlobalArgs, a: &VerifyArgs) -> anyhow::Result<Status> {
    let out = g.out_dir.clone();
    if let Some(out) = &out {
        manifest(g, "verify", NO_PRESET, effective_seed(g, None), &[&a.store], out).write(MANIFEST_FILE)?;
    }
    let store = load_store(&a.store)?;
    let report = verify_split_counts(&store)?;
    print!("{}", report.render());
    if let Some(out) = &out {
        write_json(&out.join("verify_report.json"), &report)?;
    }
    Ok(if report.passed { Status::Success } else { Status::Failed })
}

fn resolve_config(g: &GlobalArgs, preset: Option<&str>) -> anyhow::Result<TrainingConfig> {
    let o = overrides(g)?;
    let name = preset
        .or_else(|| o.as_ref().and_then(|o| o.preset.as_deref()))
        .unwrap_or("submitted");
    let mut cfg = TrainingConfig::preset(name)?;
    if let Some(o) = &o {
        o.apply(&mut cfg)?;
    }
    cfg.seed = effective_seed(g, o.as_ref());
    Ok(cfg)
}

#[derive(Serialize)]
struct TaskSummary {
    checkpoint: PathBuf,
    best_epoch: usize,
    best_dev_macro_f1: f64,
    steps: usize,
    class_weights: ClassWeights,
    history: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct TrainSummary {
    preset: String,
    model: String,
    config: TrainingConfig,
    tasks: BTreeMap<Subtask, TaskSummary>,
}

pub(crate) fn train(g: &GlobalArgs, a: &TrainArgs) -> anyhow::Result<Status> {
    let cfg = resolve_config(g, a.preset.as_deref())?;
    let variant = ModelVariant::for_preset(&cfg.preset)
        .ok_or_else(|| anyhow!("preset {:?} does not name a model variant", cfg.preset))?;
    let tasks = parse_tasks(std::slice::from_ref(&a.task))?;
    let out = out_dir(g, "train");
    let mut inputs = vec![a.store.as_path()];
    if let Some(c) = &g.config {
        inputs.push(c);
    }
    manifest(g, "train", &cfg.preset, cfg.seed, &inputs, &out).write(MANIFEST_FILE)?;

    let store = load_store(&a.store)?;
    let train_records = split_of(&store, Split::Train)?;
    let dev_records = split_of(&store, Split::Dev)?;
    let encoders = g.encoder_set();
    let mut summary = TrainSummary {
        preset: cfg.preset.clone(),
        model: variant.display_name().to_string(),
        config: cfg.clone(),
        tasks: BTreeMap::new(),
    };
    for task in tasks {
        let task_dir = out.join(task.name());
        let opts = TrainOptions {
            out_dir: Some(task_dir.clone()),
            threshold: g.threshold,
            ..Default::default()
        };
        let spec = variant.model_spec(task, &encoders);
        let outcome = trainer::train(&spec, &cfg, train_records, dev_records, &opts)
            .with_context(|| format!("training {} for {task}", variant.display_name()))?;
        println!(
            "{task}: best dev macro-F1 {:.4} at epoch {} ({} steps)",
            outcome.best_dev_f1, outcome.best_epoch, outcome.steps
        );
        summary.tasks.insert(
            task,
            TaskSummary {
                checkpoint: task_dir.join(CHECKPOINT_FILE),
                best_epoch: outcome.best_epoch,
                best_dev_macro_f1: outcome.best_dev_f1,
                steps: outcome.steps,
                class_weights: outcome.class_weights,
                history: outcome.history,
            },
        );
    }
    write_json(&out.join("train_summary.json"), &summary)?;
    Ok(Status::Success)
}

/// Per-subtask checkpoints: a single file, or `<dir>/<task>/best.safetensors` for each task found.
fn find_checkpoints(path: &Path, wanted: Option<&[Subtask]>) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(anyhow!(memotion_core::Error::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        ))));
    }
    let mut found = Vec::new();
    for task in wanted.unwrap_or(&Subtask::ALL) {
        let file = path.join(task.name()).join(CHECKPOINT_FILE);
        if file.is_file() {
            found.push(file);
        } else if wanted.is_some() {
            return Err(anyhow!(memotion_core::Error::Config(format!(
                "no checkpoint for {task} at {}",
                file.display()
            ))));
        }
    }
    if found.is_empty() {
        return Err(anyhow!(memotion_core::Error::Config(format!(
            "no checkpoints found under {}",
            path.display()
        ))));
    }
    Ok(found)
}

#[derive(Serialize)]
struct Evaluation {
    split: Split,
    checkpoints: BTreeMap<Subtask, PathBuf>,
    per_subtask: BTreeMap<Subtask, f64>,
    /// Present when all eight subtasks were scored.
    report: Option<EvaluationReport>,
}

pub(crate) fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> anyhow::Result<Status> {
    let o = overrides(g)?;
    let seed = effective_seed(g, o.as_ref());
    let out = out_dir(g, "evaluate");
    manifest(g, "evaluate", NO_PRESET, seed, &[&a.store, &a.checkpoint], &out).write(MANIFEST_FILE)?;

    let store = load_store(&a.store)?;
    let split = a.split.unwrap_or_else(|| evaluation_split(&store));
    let records = split_of(&store, split)?;
    let mut cfg = TrainingConfig::preset("submitted")?;
    if let Some(o) = &o {
        o.apply(&mut cfg)?;
    }
    let build = BuildOptions {
        seed,
        ..Default::default()
    };
    let mut eval = Evaluation {
        split,
        checkpoints: BTreeMap::new(),
        per_subtask: BTreeMap::new(),
        report: None,
    };
    for path in find_checkpoints(&a.checkpoint, None)? {
        let net = FusionNetwork::load(&path, &build).with_context(|| format!("loading {}", path.display()))?;
        let task = net.spec().task;
        let usable = usable_records(records, net.spec(), &cfg);
        let set = embed_records(&net, &usable, 64)?;
        let f1 = evaluate_features(&net, &set, g.threshold)?;
        println!("{task}: macro-F1 {f1:.4} on {split} ({} records)", set.len());
        eval.checkpoints.insert(task, path);
        eval.per_subtask.insert(task, f1);
    }
    if eval.per_subtask.len() == Subtask::ALL.len() {
        let report = aggregate(&eval.per_subtask)?;
        println!(
            "Task A {:.4}  Task B {:.4}  Task C {:.4}",
            report.task_a_score, report.task_b_score, report.task_c_score
        );
        eval.report = Some(report);
    }
    write_json(&out.join("evaluation.json"), &eval)?;
    Ok(Status::Success)
}

pub(crate) fn compare(g: &GlobalArgs, a: &CompareArgs) -> anyhow::Result<Status> {
    let o = overrides(g)?;
    let seed = effective_seed(g, o.as_ref());
    let out = out_dir(g, "compare");
    let mut inputs = vec![a.store.as_path()];
    if let Some(c) = &g.config {
        inputs.push(c);
    }
    let preset = o.as_ref().and_then(|o| o.preset.clone()).unwrap_or_else(|| "comparative".to_string());
    let m = manifest(g, "compare", &preset, seed, &inputs, &out);
    m.write(MANIFEST_FILE)?;

    let store = load_store(&a.store)?;
    let mut variants = if a.models.is_empty() { ModelVariant::ALL.to_vec() } else { a.models.clone() };
    variants.dedup();
    let plan = ComparisonPlan {
        variants,
        encoders: g.encoder_set(),
        seed,
        overrides: o,
        threshold: g.threshold,
        timestamp: m.timestamp.clone(),
    };
    let outcome = run_comparison(&store, &plan);

    let results_path = out.join("results.jsonl");
    let mut results = Vec::new();
    for r in &outcome.results {
        serde_json::to_writer(&mut results, r)?;
        results.push(b'\n');
    }
    std::fs::write(&results_path, results).with_context(|| format!("writing {}", results_path.display()))?;
    let text = outcome.table.to_text();
    std::fs::write(out.join("comparison.txt"), &text).context("writing comparison.txt")?;
    write_json(&out.join("comparison.json"), &outcome)?;
    print!("{text}");

    let failed: Vec<_> = outcome.failures().collect();
    for f in &failed {
        log::error!("{} failed: {}", f.variant, f.error.as_deref().unwrap_or("unknown error"));
    }
    if !failed.is_empty() && failed.len() == outcome.outcomes.len() {
        bail!("every model variant failed");
    }
    Ok(Status::Success)
}

#[derive(Serialize)]
struct TaskPrediction {
    label: &'static str,
    class_index: usize,
    /// Probability of the predicted class.
    probability: f64,
    probabilities: Vec<f64>,
}

pub(crate) fn predict(g: &GlobalArgs, a: &PredictArgs) -> anyhow::Result<Status> {
    let tasks = parse_tasks(&a.tasks)?;
    let seed = effective_seed(g, None);
    if let Some(out) = &g.out_dir {
        let mut inputs = vec![a.checkpoint.as_path()];
        if let Some(i) = &a.image {
            inputs.push(i);
        }
        manifest(g, "predict", NO_PRESET, seed, &inputs, out).write(MANIFEST_FILE)?;
    }
    let record = MemeRecord {
        id: "input".to_string(),
        image_path: a.image.clone().unwrap_or_default(),
        ocr_text: None,
        corrected_text: a.caption.clone(),
        labels: None,
        needs_manual_text: false,
    };
    let build = BuildOptions {
        seed,
        ..Default::default()
    };
    let mut predictions = BTreeMap::new();
    for path in find_checkpoints(&a.checkpoint, Some(&tasks))? {
        let net = FusionNetwork::load(&path, &build).with_context(|| format!("loading {}", path.display()))?;
        let p = net.predict(&record, g.threshold)?;
        predictions.insert(
            p.task,
            TaskPrediction {
                label: p.label(),
                class_index: p.class_index,
                probability: p.confidence(),
                probabilities: p.probabilities.clone(),
            },
        );
    }
    if let Some(out) = &g.out_dir {
        write_json(&out.join("prediction.json"), &predictions)?;
    }
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &predictions)?;
    writeln!(stdout)?;
    Ok(Status::Success)
}
