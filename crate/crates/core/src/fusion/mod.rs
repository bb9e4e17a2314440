//! Late-fusion classifier: text and/or image embeddings are concatenated (text first), passed
//! through one ReLU dense layer and dropout, then an output layer sized for the subtask.

mod checkpoint;

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use crate::dataset::{MemeRecord, OutputActivation, Subtask};
use crate::encoders::{
    EmbeddingVector, EncoderSpec, ImageEncoder, LoadOptions, Modality, RgbTensor, TextEncoder,
    TextEncoding, VarRegistry, DEFAULT_MAX_SEQUENCE_LENGTH,
};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub text_encoder: Option<EncoderSpec>,
    pub image_encoder: Option<EncoderSpec>,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub l2_coefficient: f64,
    pub task: Subtask,
    #[serde(default = "default_max_len")]
    pub max_sequence_length: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_SEQUENCE_LENGTH
}

impl ModelSpec {
    pub fn new(text: Option<EncoderSpec>, image: Option<EncoderSpec>, task: Subtask) -> Self {
        ModelSpec {
            text_encoder: text,
            image_encoder: image,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            dropout_rate: 0.0,
            l2_coefficient: 0.0,
            task,
            max_sequence_length: DEFAULT_MAX_SEQUENCE_LENGTH,
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.text_encoder.as_ref().map_or(0, |e| e.output_dim)
            + self.image_encoder.as_ref().map_or(0, |e| e.output_dim)
    }

    /// Weights plus biases of the post-fusion dense layer.
    pub fn dense_parameter_count(&self) -> usize {
        (self.fused_dim() + 1) * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        if self.text_encoder.is_none() && self.image_encoder.is_none() {
            return bad("at least one encoder must be present");
        }
        if let Some(t) = &self.text_encoder {
            if t.modality() != Modality::Text {
                return bad("text_encoder must be a text encoder kind");
            }
            t.validate()?;
        }
        if let Some(i) = &self.image_encoder {
            if i.modality() != Modality::Image {
                return bad("image_encoder must be an image encoder kind");
            }
            i.validate()?;
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return bad("l2_coefficient must be non-negative");
        }
        if self.max_sequence_length < 3 {
            return bad("max_sequence_length must be at least 3");
        }
        Ok(())
    }
}

/// Concatenates text then image embeddings; a single input passes through relabeled as fused.
pub fn fuse(text: Option<EmbeddingVector>, image: Option<EmbeddingVector>) -> Result<EmbeddingVector> {
    for (e, want) in [(&text, Modality::Text), (&image, Modality::Image)] {
        if let Some(e) = e {
            if e.modality() != want {
                return Err(Error::InvalidModel(format!(
                    "expected a {} embedding, got {}",
                    want.name(),
                    e.modality().name()
                )));
            }
        }
    }
    match (text, image) {
        (None, None) => Err(Error::InvalidModel("nothing to fuse: both embeddings absent".into())),
        (Some(e), None) | (None, Some(e)) => Ok(e.relabel(Modality::Fused)),
        (Some(t), Some(i)) => {
            let mut values = t.into_values();
            values.extend_from_slice(i.values());
            EmbeddingVector::new(Modality::Fused, values)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: Subtask,
    /// Class distribution (softmax) or the single positive-class probability (sigmoid).
    pub probabilities: Vec<f64>,
    pub class_index: usize,
}

impl Prediction {
    /// Softmax: argmax, lowest index on ties. Sigmoid: positive iff `p >= threshold`.
    pub fn from_probabilities(task: Subtask, probabilities: Vec<f64>, threshold: f64) -> Self {
        let class_index = match task.activation() {
            OutputActivation::Sigmoid => usize::from(probabilities[0] >= threshold),
            OutputActivation::Softmax => {
                let mut best = 0;
                for (i, &p) in probabilities.iter().enumerate() {
                    if p > probabilities[best] {
                        best = i;
                    }
                }
                best
            }
        };
        Prediction {
            task,
            probabilities,
            class_index,
        }
    }

    pub fn label(&self) -> &'static str {
        self.task.class_label(self.class_index)
    }

    /// Probability assigned to the predicted class.
    pub fn confidence(&self) -> f64 {
        match self.task.activation() {
            OutputActivation::Sigmoid if self.class_index == 1 => self.probabilities[0],
            OutputActivation::Sigmoid => 1.0 - self.probabilities[0],
            OutputActivation::Softmax => self.probabilities[self.class_index],
        }
    }
}

/// Encoder inputs for one record.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub id: String,
    pub text: Option<TextEncoding>,
    pub image: Option<RgbTensor>,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub seed: u64,
    pub device: Device,
    pub dtype: DType,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            seed: 42,
            device: Device::Cpu,
            dtype: DType::F32,
        }
    }
}

pub(crate) struct Head {
    pub dense_weight: Var,
    pub dense_bias: Var,
    pub output_weight: Var,
    pub output_bias: Var,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, opts: &BuildOptions) -> Result<Var> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    let t = Tensor::from_vec(values, (rows, cols), &opts.device)?.to_dtype(opts.dtype)?;
    Ok(Var::from_tensor(&t)?)
}

impl Head {
    fn init(spec: &ModelSpec, opts: &BuildOptions) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (f, h, o) = (spec.fused_dim(), spec.hidden_dim, spec.task.output_dim());
        Ok(Head {
            dense_weight: glorot(&mut rng, h, f, opts)?,
            dense_bias: Var::zeros(h, opts.dtype, &opts.device)?,
            output_weight: glorot(&mut rng, o, h, opts)?,
            output_bias: Var::zeros(o, opts.dtype, &opts.device)?,
        })
    }
}

pub struct FusionNetwork {
    spec: ModelSpec,
    text: Option<TextEncoder>,
    image: Option<ImageEncoder>,
    pub(crate) head: Head,
    pub(crate) text_vars: Vec<(String, Var)>,
    pub(crate) image_vars: Vec<(String, Var)>,
    device: Device,
    dtype: DType,
}

/// Builds the network with randomly initialized head layers.
pub fn build_model(spec: &ModelSpec, opts: &BuildOptions) -> Result<FusionNetwork> {
    FusionNetwork::assemble(spec, opts, HashMap::new(), HashMap::new())
}

impl FusionNetwork {
    pub(crate) fn assemble(
        spec: &ModelSpec,
        opts: &BuildOptions,
        text_overrides: HashMap<String, Tensor>,
        image_overrides: HashMap<String, Tensor>,
    ) -> Result<Self> {
        spec.validate()?;
        let load = |overrides: HashMap<String, Tensor>| LoadOptions {
            device: opts.device.clone(),
            dtype: opts.dtype,
            registry: Some(VarRegistry::default()),
            overrides,
        };
        let text_opts = load(text_overrides);
        let image_opts = load(image_overrides);
        let text = spec
            .text_encoder
            .as_ref()
            .map(|s| TextEncoder::load(s, &text_opts))
            .transpose()?;
        let image = spec
            .image_encoder
            .as_ref()
            .map(|s| ImageEncoder::load(s, &image_opts))
            .transpose()?;
        let vars = |o: &LoadOptions| o.registry.as_ref().map(VarRegistry::vars).unwrap_or_default();
        Ok(FusionNetwork {
            spec: spec.clone(),
            text,
            image,
            head: Head::init(spec, opts)?,
            text_vars: vars(&text_opts),
            image_vars: vars(&image_opts),
            device: opts.device.clone(),
            dtype: opts.dtype,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn text_encoder(&self) -> Option<&TextEncoder> {
        self.text.as_ref()
    }

    pub fn image_encoder(&self) -> Option<&ImageEncoder> {
        self.image.as_ref()
    }

    /// True when any encoder weight receives gradient updates.
    pub fn has_trainable_encoders(&self) -> bool {
        !self.text_vars.is_empty() || !self.image_vars.is_empty()
    }

    pub fn dense_weight(&self) -> &Var {
        &self.head.dense_weight
    }

    pub fn dense_bias(&self) -> &Var {
        &self.head.dense_bias
    }

    pub fn head_vars(&self) -> Vec<Var> {
        let h = &self.head;
        vec![
            h.dense_weight.clone(),
            h.dense_bias.clone(),
            h.output_weight.clone(),
            h.output_bias.clone(),
        ]
    }

    /// Head variables followed by any trainable encoder variables.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut v = self.head_vars();
        v.extend(self.text_vars.iter().chain(&self.image_vars).map(|(_, v)| v.clone()));
        v
    }

    /// Number of elements in the dense layer's weight and bias.
    pub fn dense_parameter_count(&self) -> usize {
        self.head.dense_weight.elem_count() + self.head.dense_bias.elem_count()
    }

    /// Tokenizes the caption and decodes the image this network needs.
    pub fn prepare(&self, record: &MemeRecord) -> Result<ModelInput> {
        let text = match &self.text {
            Some(enc) => {
                let caption = record.caption().ok_or_else(|| Error::MissingModality {
                    record: record.id.clone(),
                    modality: "text",
                })?;
                Some(enc.tokenize(caption, self.spec.max_sequence_length)?)
            }
            None => None,
        };
        let image = match &self.image {
            Some(enc) => {
                if record.image_path.as_os_str().is_empty() || !record.image_path.is_file() {
                    return Err(Error::MissingModality {
                        record: record.id.clone(),
                        modality: "image",
                    });
                }
                Some(enc.preprocess(&record.image_path)?)
            }
            None => None,
        };
        Ok(ModelInput {
            id: record.id.clone(),
            text,
            image,
        })
    }

    /// Fused embeddings `[batch, fused_dim]`.
    pub fn embed(&self, inputs: &[ModelInput]) -> Result<Tensor> {
        let mut parts = Vec::with_capacity(2);
        if let Some(enc) = &self.text {
            let batch = inputs
                .iter()
                .map(|i| {
                    i.text.clone().ok_or_else(|| Error::MissingModality {
                        record: i.id.clone(),
                        modality: "text",
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            parts.push(enc.forward(&batch)?);
        }
        if let Some(enc) = &self.image {
            let batch = inputs
                .iter()
                .map(|i| {
                    i.image.clone().ok_or_else(|| Error::MissingModality {
                        record: i.id.clone(),
                        modality: "image",
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            parts.push(enc.forward(&batch)?);
        }
        Ok(Tensor::cat(&parts, 1)?.to_dtype(self.dtype)?)
    }

    /// Output-layer pre-activations. When `dropout` carries a generator, an inverted dropout
    /// mask drawn from it is applied after the dense layer; otherwise dropout is off.
    pub fn logits(&self, fused: &Tensor, dropout: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let h = &self.head;
        let mut hidden = fused
            .matmul(&h.dense_weight.t()?)?
            .broadcast_add(&h.dense_bias)?
            .relu()?;
        let p = self.spec.dropout_rate;
        if let (Some(rng), true) = (dropout, p > 0.0) {
            let keep = 1.0 / (1.0 - p);
            let mask: Vec<f64> = (0..hidden.elem_count())
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect();
            let mask = Tensor::from_vec(mask, hidden.shape(), &self.device)?.to_dtype(self.dtype)?;
            hidden = (hidden * mask)?;
        }
        Ok(hidden
            .matmul(&h.output_weight.t()?)?
            .broadcast_add(&h.output_bias)?)
    }

    /// Softmax or sigmoid of the logits, per the subtask.
    pub fn activate(&self, logits: &Tensor) -> Result<Tensor> {
        Ok(match self.spec.task.activation() {
            OutputActivation::Softmax => candle_nn::ops::softmax(logits, D::Minus1)?,
            OutputActivation::Sigmoid => candle_nn::ops::sigmoid(logits)?,
        })
    }

    /// Inference on precomputed fused embeddings (dropout off).
    pub fn predict_fused(&self, fused: &Tensor, threshold: f64) -> Result<Vec<Prediction>> {
        let probs = self
            .activate(&self.logits(fused, None)?)?
            .to_dtype(DType::F64)?
            .to_vec2::<f64>()?;
        Ok(probs
            .into_iter()
            .map(|p| Prediction::from_probabilities(self.spec.task, p, threshold))
            .collect())
    }

    pub fn predict_inputs(&self, inputs: &[ModelInput], threshold: f64) -> Result<Vec<Prediction>> {
        self.predict_fused(&self.embed(inputs)?.detach(), threshold)
    }

    pub fn predict(&self, record: &MemeRecord, threshold: f64) -> Result<Prediction> {
        let input = self.prepare(record)?;
        Ok(self.predict_inputs(&[input], threshold)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::WeightSource;
    use proptest::prelude::*;
    use rand::Rng;

    fn emb(m: Modality, n: usize) -> EmbeddingVector {
        EmbeddingVector::new(m, vec![0.5; n]).unwrap()
    }

    fn toy_spec(task: Subtask) -> ModelSpec {
        let mut s = ModelSpec::new(
            Some(EncoderSpec::toy_text(12)),
            Some(EncoderSpec::toy_image(6)),
            task,
        );
        s.hidden_dim = 5;
        s
    }

    #[test]
    fn fusion_dimensions() {
        let f = fuse(Some(emb(Modality::Text, 768)), Some(emb(Modality::Image, 1024))).unwrap();
        assert_eq!((f.dim(), f.modality()), (1792, Modality::Fused));
        let f = fuse(Some(emb(Modality::Text, 768)), None).unwrap();
        assert_eq!((f.dim(), f.modality()), (768, Modality::Fused));
        let f = fuse(Some(emb(Modality::Text, 768)), Some(emb(Modality::Image, 2048))).unwrap();
        assert_eq!(f.dim(), 2816);
        assert!(fuse(None, None).is_err());
        assert!(fuse(Some(emb(Modality::Image, 4)), None).is_err());
    }

    #[test]
    fn fusion_order_is_text_then_image() {
        let t = EmbeddingVector::new(Modality::Text, vec![1.0, 2.0]).unwrap();
        let i = EmbeddingVector::new(Modality::Image, vec![3.0]).unwrap();
        assert_eq!(fuse(Some(t), Some(i)).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn output_layer_follows_task() {
        for (task, dim) in [(Subtask::A, 3), (Subtask::BFunny, 1), (Subtask::COffensive, 4)] {
            let net = build_model(&toy_spec(task), &BuildOptions::default()).unwrap();
            assert_eq!(net.head.output_weight.dims(), &[dim, 5]);
            assert_eq!(net.dense_parameter_count(), (18 + 1) * 5);
            assert_eq!(net.spec().dense_parameter_count(), (18 + 1) * 5);
        }
    }

    #[test]
    fn spec_validation_names_the_problem() {
        let s = ModelSpec::new(None, None, Subtask::A);
        let err = build_model(&s, &BuildOptions::default()).err().unwrap();
        assert!(err.to_string().contains("at least one encoder"));
        let mut s = toy_spec(Subtask::A);
        s.dropout_rate = 1.0;
        assert!(s.validate().is_err());
        let s = ModelSpec::new(Some(EncoderSpec::toy_image(4)), None, Subtask::A);
        assert!(s.validate().is_err());
        let s = ModelSpec::new(
            Some(EncoderSpec::bert_base_cased(WeightSource::Procedural)),
            Some(EncoderSpec::densenet121(WeightSource::Procedural)),
            Subtask::A,
        );
        assert_eq!(s.fused_dim(), 1792);
        assert_eq!(s.dense_parameter_count(), 1793 * 256);
    }

    #[test]
    fn decision_rules() {
        let p = Prediction::from_probabilities(Subtask::BFunny, vec![0.5], 0.5);
        assert_eq!((p.class_index, p.label()), (1, "funny"));
        let p = Prediction::from_probabilities(Subtask::BFunny, vec![0.7], 0.5);
        assert_eq!(p.label(), "funny");
        let p = Prediction::from_probabilities(Subtask::A, vec![0.2, 0.6, 0.2], 0.5);
        assert_eq!(p.class_index, 1);
        let p = Prediction::from_probabilities(Subtask::A, vec![0.4, 0.4, 0.2], 0.5);
        assert_eq!(p.class_index, 0);
    }

    #[test]
    fn missing_image_is_a_modality_error() {
        let net = build_model(&toy_spec(Subtask::A), &BuildOptions::default()).unwrap();
        let record = MemeRecord {
            id: "m1".into(),
            image_path: "/nonexistent/m1.png".into(),
            ocr_text: Some("hello".into()),
            corrected_text: Some("hello".into()),
            labels: None,
            needs_manual_text: false,
        };
        assert!(matches!(
            net.predict(&record, 0.5),
            Err(Error::MissingModality { modality: "image", .. })
        ));
    }

    #[test]
    fn inference_ignores_dropout_rate() {
        let mut s = toy_spec(Subtask::A);
        s.dropout_rate = 0.5;
        let net = build_model(&s, &BuildOptions::default()).unwrap();
        let x = Tensor::ones((3, 18), DType::F32, &Device::Cpu).unwrap();
        let a = net.predict_fused(&x, 0.5).unwrap();
        assert_eq!(a, net.predict_fused(&x, 0.5).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let net = build_model(&toy_spec(Subtask::CFunny), &BuildOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let v: Vec<f32> = (0..18).map(|_| rng.random_range(-20.0f32..20.0)).collect();
            let x = Tensor::from_vec(v, (1, 18), &Device::Cpu).unwrap();
            let p = net.predict_fused(&x, 0.5).unwrap().remove(0);
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_output_is_a_probability(v in proptest::collection::vec(-50f32..50.0, 18)) {
            let net = build_model(&toy_spec(Subtask::BSarcastic), &BuildOptions::default()).unwrap();
            let x = Tensor::from_vec(v, (1, 18), &Device::Cpu).unwrap();
            let p = net.predict_fused(&x, 0.5).unwrap().remove(0);
            prop_assert_eq!(p.probabilities.len(), 1);
            prop_assert!((0.0..=1.0).contains(&p.probabilities[0]));
        }
    }
}
