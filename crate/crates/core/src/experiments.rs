//! The five-way model comparison: unimodal text, two unimodal image variants and the two
//! text+image combinations, each trained once per subtask.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{MemeRecord, Split, Subtask};
use crate::encoders::{EncoderSpec, WeightSource, TEXT_DIM};
use crate::error::{Error, Result};
use crate::fusion::{build_model, BuildOptions, ModelSpec};
use crate::metrics::{aggregate, render_comparison, ComparisonTable, EvaluationReport, ResultRecord};
use crate::trainer::{
    apply_config, embed_records, evaluate_features, fit_features, train, usable_records, ConfigOverrides,
    FeatureSet, TrainOptions, TrainingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Bert,
    DenseNet,
    ResNet,
    BertDenseNet,
    BertResNet,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::Bert,
        ModelVariant::DenseNet,
        ModelVariant::ResNet,
        ModelVariant::BertDenseNet,
        ModelVariant::BertResNet,
    ];

    /// Row name in the comparison table.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelVariant::Bert => "BERT",
            ModelVariant::DenseNet => "DenseNet",
            ModelVariant::ResNet => "ResNet",
            ModelVariant::BertDenseNet => "BERT-DenseNet",
            ModelVariant::BertResNet => "BERT-ResNet",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ModelVariant::Bert => "bert",
            ModelVariant::DenseNet => "densenet",
            ModelVariant::ResNet => "resnet",
            ModelVariant::BertDenseNet => "bert_densenet",
            ModelVariant::BertResNet => "bert_resnet",
        }
    }

    /// Hyperparameter preset used for this variant in the comparison.
    pub fn preset(self) -> String {
        format!("comparative_{}", self.key())
    }

    /// The variant a training preset is defined for.
    pub fn for_preset(preset: &str) -> Option<ModelVariant> {
        if preset == "submitted" {
            return Some(ModelVariant::BertDenseNet);
        }
        let key = preset.strip_prefix("comparative_")?;
        ModelVariant::ALL.into_iter().find(|v| v.key() == key)
    }

    fn uses_text(self) -> bool {
        matches!(self, ModelVariant::Bert | ModelVariant::BertDenseNet | ModelVariant::BertResNet)
    }

    fn image_kind(self) -> Option<ImageFamily> {
        match self {
            ModelVariant::DenseNet | ModelVariant::BertDenseNet => Some(ImageFamily::Dense),
            ModelVariant::ResNet | ModelVariant::BertResNet => Some(ImageFamily::Residual),
            ModelVariant::Bert => None,
        }
    }

    pub fn model_spec(self, task: Subtask, encoders: &EncoderSet) -> ModelSpec {
        let text = self.uses_text().then(|| encoders.text());
        let image = self.image_kind().map(|f| encoders.image(f));
        ModelSpec::new(text, image, task)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.key() == norm)
            .ok_or_else(|| {
                let valid: Vec<_> = ModelVariant::ALL.iter().map(|v| v.key()).collect();
                format!("unknown model {s:?} (valid: {})", valid.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy)]
enum ImageFamily {
    Dense,
    Residual,
}

/// Which concrete encoders stand behind the variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EncoderSet {
    /// Deterministic toys with the pretrained output widths (768 / 1024 / 2048).
    Toy,
    Pretrained {
        text: WeightSource,
        dense: WeightSource,
        residual: WeightSource,
    },
}

impl EncoderSet {
    /// Archives looked up by name in the weight cache directory.
    pub fn registry() -> Self {
        EncoderSet::Pretrained {
            text: WeightSource::Registry("bert-base-cased".into()),
            dense: WeightSource::Registry("densenet121".into()),
            residual: WeightSource::Registry("resnet50".into()),
        }
    }

    pub fn text(&self) -> EncoderSpec {
        match self {
            EncoderSet::Toy => EncoderSpec::toy_text(TEXT_DIM),
            EncoderSet::Pretrained { text, .. } => EncoderSpec::bert_base_cased(text.clone()),
        }
    }

    fn image(&self, family: ImageFamily) -> EncoderSpec {
        match (self, family) {
            (EncoderSet::Toy, ImageFamily::Dense) => EncoderSpec::toy_image(1024),
            (EncoderSet::Toy, ImageFamily::Residual) => EncoderSpec::toy_image(2048),
            (EncoderSet::Pretrained { dense, .. }, ImageFamily::Dense) => EncoderSpec::densenet121(dense.clone()),
            (EncoderSet::Pretrained { residual, .. }, ImageFamily::Residual) => {
                EncoderSpec::resnet50(residual.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonPlan {
    pub variants: Vec<ModelVariant>,
    pub encoders: EncoderSet,
    pub seed: u64,
    /// Applied on top of every variant's preset.
    pub overrides: Option<ConfigOverrides>,
    pub threshold: f64,
    /// Recorded in every result line.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: ModelVariant,
    pub preset: String,
    pub eval_split: Split,
    pub report: Option<EvaluationReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub outcomes: Vec<VariantOutcome>,
    pub table: ComparisonTable,
    pub results: Vec<ResultRecord>,
}

impl ComparisonOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &VariantOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }
}

fn split_records(store: &BTreeMap<Split, Vec<MemeRecord>>, split: Split) -> Result<&[MemeRecord]> {
    store
        .get(&split)
        .map(Vec::as_slice)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Training(format!("record store has no {split} split")))
}

/// Split used for the reported scores: test when it is labeled, dev otherwise.
pub fn evaluation_split(store: &BTreeMap<Split, Vec<MemeRecord>>) -> Split {
    match store.get(&Split::Test) {
        Some(t) if !t.is_empty() && t.iter().all(|r| r.labels.is_some()) => Split::Test,
        _ => Split::Dev,
    }
}

fn variant_config(plan: &ComparisonPlan, variant: ModelVariant) -> Result<TrainingConfig> {
    let mut cfg = TrainingConfig::preset(&variant.preset())?;
    if let Some(o) = &plan.overrides {
        o.apply(&mut cfg)?;
    }
    cfg.seed = plan.seed;
    Ok(cfg)
}

/// Per-subtask macro-F1 of one variant on `eval_split`.
pub fn run_variant(
    store: &BTreeMap<Split, Vec<MemeRecord>>,
    variant: ModelVariant,
    encoders: &EncoderSet,
    config: &TrainingConfig,
    threshold: f64,
    eval_split: Split,
) -> Result<BTreeMap<Subtask, f64>> {
    let train_records = split_records(store, Split::Train)?;
    let dev_records = split_records(store, Split::Dev)?;
    let eval_records = split_records(store, eval_split)?;
    let opts = TrainOptions {
        threshold,
        ..Default::default()
    };
    let build = BuildOptions {
        seed: config.seed,
        ..Default::default()
    };
    let probe = build_model(&apply_config(&variant.model_spec(Subtask::A, encoders), config), &build)?;
    let mut scores = BTreeMap::new();
    if probe.has_trainable_encoders() {
        drop(probe);
        for task in Subtask::ALL {
            let spec = variant.model_spec(task, encoders);
            let out = train(&spec, config, train_records, dev_records, &opts)?;
            let eval = usable_records(eval_records, out.network.spec(), config);
            let set = embed_records(&out.network, &eval, config.batch_size)?;
            scores.insert(task, evaluate_features(&out.network, &set, threshold)?);
        }
        return Ok(scores);
    }
    log::info!("{variant}: encoding {} records once for all subtasks", train_records.len());
    let cache = |records: &[MemeRecord]| -> Result<FeatureSet> {
        embed_records(&probe, &usable_records(records, probe.spec(), config), 64)
    };
    let train_set = cache(train_records)?;
    let dev_set = cache(dev_records)?;
    let eval_set = if eval_split == Split::Dev { dev_set.clone() } else { cache(eval_records)? };
    drop(probe);
    for task in Subtask::ALL {
        let spec = apply_config(&variant.model_spec(task, encoders), config);
        let net = build_model(&spec, &build)?;
        let out = fit_features(net, config, &train_set, &dev_set, &opts)?;
        let f1 = evaluate_features(&out.network, &eval_set, threshold)?;
        log::info!("{variant} {task}: macro-F1 {f1:.4} (best dev epoch {})", out.best_epoch);
        scores.insert(task, f1);
    }
    Ok(scores)
}

/// Trains and evaluates every planned variant. A failing variant is recorded and the rest
/// still run.
pub fn run_comparison(store: &BTreeMap<Split, Vec<MemeRecord>>, plan: &ComparisonPlan) -> ComparisonOutcome {
    let eval_split = evaluation_split(store);
    let mut outcomes = Vec::new();
    let mut reports = BTreeMap::new();
    let mut results = Vec::new();
    for &variant in &plan.variants {
        let result = variant_config(plan, variant).and_then(|cfg| {
            let scores = run_variant(store, variant, &plan.encoders, &cfg, plan.threshold, eval_split)?;
            Ok((cfg.preset, scores))
        });
        let preset = variant.preset();
        match result.and_then(|(p, s)| Ok((p, aggregate(&s)?))) {
            Ok((preset, report)) => {
                for (&task, &score) in &report.per_subtask {
                    results.push(ResultRecord {
                        model: variant.display_name().to_string(),
                        subtask: task,
                        score,
                        seed: plan.seed,
                        preset: preset.clone(),
                        timestamp: plan.timestamp.clone(),
                    });
                }
                reports.insert(variant.display_name().to_string(), report.clone());
                outcomes.push(VariantOutcome {
                    variant,
                    preset,
                    eval_split,
                    report: Some(report),
                    error: None,
                });
            }
            Err(e) => {
                log::error!("{variant} failed: {e}");
                outcomes.push(VariantOutcome {
                    variant,
                    preset,
                    eval_split,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    ComparisonOutcome {
        outcomes,
        table: render_comparison(&reports),
        results,
    }
}
