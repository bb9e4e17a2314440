//! Text and image encoders producing fixed-size embeddings.
//!
//! Pretrained kinds are built from a [`WeightSource`]: a transformer text encoder (768-d
//! classification-token state), a densely-connected CNN (1024-d) and a residual CNN (2048-d),
//! both global-max-pooled. Toy kinds need no weights and exist for fast deterministic runs.

pub mod bert;
mod cnn;
pub mod densenet;
mod image;
pub mod resnet;
pub mod toy;
pub mod weights;
mod wordpiece;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

pub use self::image::{load_rgb, preprocess_image, to_tensor, InputConvention, RgbTensor};
pub use self::weights::{ParamBackend, VarRegistry, WeightSource, WEIGHTS_DIR_ENV};
pub use self::wordpiece::{TextEncoding, WordPieceTokenizer};

use self::bert::{BertConfig, BertEncoder};
use self::densenet::DenseNet;
use self::resnet::ResNet;
use self::toy::{ToyImageEncoder, ToyTextEncoder};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 128;
pub const TEXT_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    Fused,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Fused => "fused",
        }
    }
}

/// A finite, non-empty embedding tagged with its modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    modality: Modality,
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(modality: Modality, values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Encoder(format!("empty {} embedding", modality.name())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Encoder(format!(
                "non-finite value {} at index {i} of {} embedding",
                values[i],
                modality.name()
            )));
        }
        Ok(EmbeddingVector { modality, values })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub(crate) fn relabel(self, modality: Modality) -> Self {
        EmbeddingVector { modality, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    TransformerText,
    DenseCnn,
    ResidualCnn,
    ToyText,
    ToyImage,
}

impl EncoderKind {
    pub fn modality(self) -> Modality {
        match self {
            EncoderKind::TransformerText | EncoderKind::ToyText => Modality::Text,
            _ => Modality::Image,
        }
    }

    /// Fixed output width of the pretrained architectures; `None` for toys.
    pub fn native_dim(self) -> Option<usize> {
        match self {
            EncoderKind::TransformerText => Some(TEXT_DIM),
            EncoderKind::DenseCnn => Some(DenseNet::OUTPUT_DIM),
            EncoderKind::ResidualCnn => Some(ResNet::OUTPUT_DIM),
            EncoderKind::ToyText | EncoderKind::ToyImage => None,
        }
    }

    pub fn is_toy(self) -> bool {
        self.native_dim().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub pretrained_weights: Option<WeightSource>,
    pub trainable: bool,
    pub output_dim: usize,
}

impl EncoderSpec {
    /// Cased 12-layer, 768-wide transformer.
    pub fn bert_base_cased(weights: WeightSource) -> Self {
        EncoderSpec {
            kind: EncoderKind::TransformerText,
            pretrained_weights: Some(weights),
            trainable: true,
            output_dim: TEXT_DIM,
        }
    }

    pub fn densenet121(weights: WeightSource) -> Self {
        EncoderSpec {
            kind: EncoderKind::DenseCnn,
            pretrained_weights: Some(weights),
            trainable: false,
            output_dim: DenseNet::OUTPUT_DIM,
        }
    }

    pub fn resnet50(weights: WeightSource) -> Self {
        EncoderSpec {
            kind: EncoderKind::ResidualCnn,
            pretrained_weights: Some(weights),
            trainable: false,
            output_dim: ResNet::OUTPUT_DIM,
        }
    }

    pub fn toy_text(output_dim: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::ToyText,
            pretrained_weights: None,
            trainable: false,
            output_dim,
        }
    }

    pub fn toy_image(output_dim: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::ToyImage,
            pretrained_weights: None,
            trainable: false,
            output_dim,
        }
    }

    pub fn modality(&self) -> Modality {
        self.kind.modality()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEncoder(msg));
        if self.output_dim == 0 {
            return bad(format!("{:?}: output_dim must be positive", self.kind));
        }
        match self.kind.native_dim() {
            Some(native) if native != self.output_dim => bad(format!(
                "{:?} produces {native}-d embeddings, spec says {}",
                self.kind, self.output_dim
            )),
            Some(_) if self.pretrained_weights.is_none() => {
                bad(format!("{:?} needs pretrained_weights", self.kind))
            }
            None if self.trainable => bad(format!("{:?} has no trainable weights", self.kind)),
            _ => Ok(()),
        }
    }
}

/// Device, precision and parameter handling for building an encoder.
#[derive(Clone)]
pub struct LoadOptions {
    pub device: Device,
    pub dtype: DType,
    /// Collects the promoted variables of trainable encoders.
    pub registry: Option<VarRegistry>,
    /// Tensors replacing archive entries, keyed by parameter name.
    pub overrides: HashMap<String, Tensor>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            device: Device::Cpu,
            dtype: DType::F32,
            registry: None,
            overrides: HashMap::new(),
        }
    }
}

fn backend(spec: &EncoderSpec, opts: &LoadOptions) -> Result<ParamBackend> {
    let source = spec
        .pretrained_weights
        .as_ref()
        .ok_or_else(|| Error::InvalidEncoder(format!("{:?} needs pretrained_weights", spec.kind)))?;
    let mut b = ParamBackend::from_source(source)?.with_overrides(opts.overrides.clone());
    if spec.trainable {
        b = b.trainable(opts.registry.clone().unwrap_or_default());
    }
    Ok(b)
}

fn archive_dir(source: &WeightSource) -> Result<Option<PathBuf>> {
    Ok(source.resolve()?.map(|p| {
        if p.is_dir() {
            p
        } else {
            p.parent().map(Path::to_path_buf).unwrap_or_default()
        }
    }))
}

enum TextBackbone {
    Bert(Box<BertEncoder>),
    Toy(ToyTextEncoder),
}

pub struct TextEncoder {
    backbone: TextBackbone,
    tokenizer: WordPieceTokenizer,
    model_vocab: usize,
    dim: usize,
    device: Device,
    dtype: DType,
}

impl TextEncoder {
    /// Builds the encoder. A pretrained archive directory supplies `model.safetensors`,
    /// `vocab.txt` and optionally `config.json`; procedural weights use the built-in
    /// vocabulary.
    pub fn load(spec: &EncoderSpec, opts: &LoadOptions) -> Result<Self> {
        spec.validate()?;
        let (backbone, tokenizer, model_vocab) = match spec.kind {
            EncoderKind::ToyText => {
                let tokenizer = WordPieceTokenizer::toy();
                let special = vec![tokenizer.cls_id(), tokenizer.sep_id(), tokenizer.pad_id()];
                let vocab = tokenizer.vocab_size();
                (TextBackbone::Toy(ToyTextEncoder::new(spec.output_dim, special)), tokenizer, vocab)
            }
            EncoderKind::TransformerText => {
                let source = spec.pretrained_weights.as_ref().expect("validated");
                let dir = archive_dir(source)?;
                let tokenizer = match &dir {
                    Some(d) => WordPieceTokenizer::from_vocab_file(&d.join("vocab.txt"))?,
                    None => WordPieceTokenizer::toy(),
                };
                let config = match dir.as_ref().map(|d| d.join("config.json")) {
                    Some(p) if p.exists() => {
                        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                        serde_json::from_str::<BertConfig>(&text)?
                    }
                    _ => BertConfig::base_cased(),
                };
                if config.hidden_size != spec.output_dim {
                    return Err(Error::InvalidEncoder(format!(
                        "text archive has hidden size {}, spec says {}",
                        config.hidden_size, spec.output_dim
                    )));
                }
                let vocab = config.vocab_size;
                if tokenizer.vocab_size() > vocab {
                    return Err(Error::InvalidEncoder(format!(
                        "tokenizer vocabulary ({}) exceeds embedding table ({vocab})",
                        tokenizer.vocab_size()
                    )));
                }
                let vb = backend(spec, opts)?.into_var_builder(opts.dtype, &opts.device);
                let model = BertEncoder::load(vb, config)?;
                (TextBackbone::Bert(Box::new(model)), tokenizer, vocab)
            }
            other => {
                return Err(Error::InvalidEncoder(format!("{other:?} is not a text encoder")));
            }
        };
        Ok(TextEncoder {
            backbone,
            tokenizer,
            model_vocab,
            dim: spec.output_dim,
            device: opts.device.clone(),
            dtype: opts.dtype,
        })
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.tokenizer
    }

    pub fn output_dim(&self) -> usize {
        self.dim
    }

    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<TextEncoding> {
        self.tokenizer.tokenize(text, max_len)
    }

    fn check_ids(&self, enc: &TextEncoding) -> Result<()> {
        match enc.token_ids.iter().find(|&&id| id as usize >= self.model_vocab) {
            Some(id) => Err(Error::Encoder(format!(
                "token id {id} outside vocabulary of size {}",
                self.model_vocab
            ))),
            None if enc.token_ids.len() != enc.segment_ids.len() => Err(Error::Encoder(
                "token and segment sequences differ in length".into(),
            )),
            None => Ok(()),
        }
    }

    /// `[batch, dim]` embeddings; attached to the autograd graph for trainable encoders.
    pub fn forward(&self, batch: &[TextEncoding]) -> Result<Tensor> {
        for enc in batch {
            self.check_ids(enc)?;
        }
        match &self.backbone {
            TextBackbone::Toy(toy) => {
                let flat: Vec<f32> = batch.iter().flat_map(|e| toy.embed(&e.token_ids)).collect();
                Ok(Tensor::from_vec(flat, (batch.len(), self.dim), &self.device)?.to_dtype(self.dtype)?)
            }
            TextBackbone::Bert(model) => {
                let t = batch.iter().map(TextEncoding::len).max().unwrap_or(0).max(1);
                let pad = self.tokenizer.pad_id();
                let mut ids = Vec::with_capacity(batch.len() * t);
                let mut segs = Vec::with_capacity(batch.len() * t);
                let mut mask = Vec::with_capacity(batch.len() * t);
                for enc in batch {
                    let n = enc.len();
                    ids.extend(enc.token_ids.iter().copied().chain(std::iter::repeat_n(pad, t - n)));
                    segs.extend(enc.segment_ids.iter().copied().chain(std::iter::repeat_n(0, t - n)));
                    mask.extend((0..t).map(|i| u32::from(i < n)));
                }
                let shape = (batch.len(), t);
                let ids = Tensor::from_vec(ids, shape, &self.device)?;
                let segs = Tensor::from_vec(segs, shape, &self.device)?;
                let mask = Tensor::from_vec(mask, shape, &self.device)?;
                Ok(model.forward_cls(&ids, &segs, &mask)?)
            }
        }
    }

    pub fn encode_text(&self, enc: &TextEncoding) -> Result<EmbeddingVector> {
        let t = self.forward(std::slice::from_ref(enc))?;
        let values = t.squeeze(0)?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        EmbeddingVector::new(Modality::Text, values)
    }
}

enum ImageBackbone {
    Dense(Box<DenseNet>),
    Residual(Box<ResNet>),
    Toy(ToyImageEncoder),
}

pub struct ImageEncoder {
    backbone: ImageBackbone,
    dim: usize,
    device: Device,
    dtype: DType,
}

impl ImageEncoder {
    pub fn load(spec: &EncoderSpec, opts: &LoadOptions) -> Result<Self> {
        spec.validate()?;
        let backbone = match spec.kind {
            EncoderKind::ToyImage => ImageBackbone::Toy(ToyImageEncoder::new(spec.output_dim)),
            EncoderKind::DenseCnn => {
                let vb = backend(spec, opts)?.into_var_builder(opts.dtype, &opts.device);
                ImageBackbone::Dense(Box::new(DenseNet::load(vb)?))
            }
            EncoderKind::ResidualCnn => {
                let vb = backend(spec, opts)?.into_var_builder(opts.dtype, &opts.device);
                ImageBackbone::Residual(Box::new(ResNet::load(vb)?))
            }
            other => {
                return Err(Error::InvalidEncoder(format!("{other:?} is not an image encoder")));
            }
        };
        Ok(ImageEncoder {
            backbone,
            dim: spec.output_dim,
            device: opts.device.clone(),
            dtype: opts.dtype,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.dim
    }

    /// Input size and normalization expected by this encoder.
    pub fn convention(&self) -> InputConvention {
        match self.backbone {
            ImageBackbone::Toy(_) => InputConvention::UNIT,
            _ => InputConvention::IMAGENET,
        }
    }

    pub fn preprocess(&self, path: &Path) -> Result<RgbTensor> {
        preprocess_image(path, &self.convention())
    }

    /// `[batch, dim]` embeddings of preprocessed images.
    pub fn forward(&self, batch: &[RgbTensor]) -> Result<Tensor> {
        for img in batch {
            if img.data.len() != 3 * img.height * img.width {
                return Err(Error::Encoder(format!(
                    "expected 3-channel {}×{} image, got {} values",
                    img.height,
                    img.width,
                    img.data.len()
                )));
            }
        }
        match &self.backbone {
            ImageBackbone::Toy(toy) => {
                let flat: Vec<f32> = batch.iter().flat_map(|img| toy.embed(img)).collect();
                Ok(Tensor::from_vec(flat, (batch.len(), self.dim), &self.device)?.to_dtype(self.dtype)?)
            }
            ImageBackbone::Dense(net) => Ok(net.forward(&self.stack(batch)?)?),
            ImageBackbone::Residual(net) => Ok(net.forward(&self.stack(batch)?)?),
        }
    }

    fn stack(&self, batch: &[RgbTensor]) -> Result<Tensor> {
        let first = batch
            .first()
            .ok_or_else(|| Error::Encoder("empty image batch".into()))?;
        let (h, w) = (first.height, first.width);
        if batch.iter().any(|i| (i.height, i.width) != (h, w)) {
            return Err(Error::Encoder("images in a batch must share one size".into()));
        }
        let flat: Vec<f32> = batch.iter().flat_map(|i| i.data.iter().copied()).collect();
        Ok(Tensor::from_vec(flat, (batch.len(), 3, h, w), &self.device)?.to_dtype(self.dtype)?)
    }

    pub fn encode_image(&self, img: &RgbTensor) -> Result<EmbeddingVector> {
        let t = self.forward(std::slice::from_ref(img))?;
        let values = t.squeeze(0)?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        EmbeddingVector::new(Modality::Image, values)
    }
}
