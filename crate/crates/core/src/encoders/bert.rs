//! Bidirectional transformer encoder (BERT layout) returning the final hidden state at the
//! classification-token position. Parameter names follow the usual `embeddings.*` /
//! `encoder.layer.N.*` convention so published checkpoints load unchanged.

use candle_core::{DType, Module, Tensor, D};
use candle_nn::{embedding, layer_norm, linear, Embedding, LayerNorm, LayerNormConfig, Linear, VarBuilder};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

fn default_eps() -> f64 {
    1e-12
}

impl BertConfig {
    /// 12 layers, hidden size 768, 12 heads, cased 28,996-entry vocabulary.
    pub fn base_cased() -> Self {
        BertConfig {
            vocab_size: 28996,
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
        }
    }
}

struct SelfAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    norm: LayerNorm,
    heads: usize,
    head_dim: usize,
}

impl SelfAttention {
    fn load(vb: VarBuilder, cfg: &BertConfig, ln: LayerNormConfig) -> candle_core::Result<Self> {
        let h = cfg.hidden_size;
        Ok(SelfAttention {
            query: linear(h, h, vb.pp("self.query"))?,
            key: linear(h, h, vb.pp("self.key"))?,
            value: linear(h, h, vb.pp("self.value"))?,
            output: linear(h, h, vb.pp("output.dense"))?,
            norm: layer_norm(h, ln, vb.pp("output.LayerNorm"))?,
            heads: cfg.num_attention_heads,
            head_dim: h / cfg.num_attention_heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        x.reshape((b, t, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()
    }

    fn forward(&self, x: &Tensor, mask_bias: &Tensor) -> candle_core::Result<Tensor> {
        let q = self.split_heads(&self.query.forward(x)?)?;
        let k = self.split_heads(&self.key.forward(x)?)?;
        let v = self.split_heads(&self.value.forward(x)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(mask_bias)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?;
        let (b, t, _, _) = ctx.dims4()?;
        let ctx = ctx.reshape((b, t, self.heads * self.head_dim))?;
        self.norm.forward(&(self.output.forward(&ctx)? + x)?)
    }
}

struct Layer {
    attention: SelfAttention,
    intermediate: Linear,
    output: Linear,
    norm: LayerNorm,
}

impl Layer {
    fn load(vb: VarBuilder, cfg: &BertConfig, ln: LayerNormConfig) -> candle_core::Result<Self> {
        Ok(Layer {
            attention: SelfAttention::load(vb.pp("attention"), cfg, ln)?,
            intermediate: linear(cfg.hidden_size, cfg.intermediate_size, vb.pp("intermediate.dense"))?,
            output: linear(cfg.intermediate_size, cfg.hidden_size, vb.pp("output.dense"))?,
            norm: layer_norm(cfg.hidden_size, ln, vb.pp("output.LayerNorm"))?,
        })
    }

    fn forward(&self, x: &Tensor, mask_bias: &Tensor) -> candle_core::Result<Tensor> {
        let x = self.attention.forward(x, mask_bias)?;
        let h = self.intermediate.forward(&x)?.gelu_erf()?;
        self.norm.forward(&(self.output.forward(&h)? + x)?)
    }
}

pub struct BertEncoder {
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    embed_norm: LayerNorm,
    layers: Vec<Layer>,
    config: BertConfig,
}

impl BertEncoder {
    pub fn load(vb: VarBuilder, config: BertConfig) -> candle_core::Result<Self> {
        let ln = LayerNormConfig {
            eps: config.layer_norm_eps,
            ..Default::default()
        };
        let e = vb.pp("embeddings");
        let layers = (0..config.num_hidden_layers)
            .map(|i| Layer::load(vb.pp(format!("encoder.layer.{i}")), &config, ln))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(BertEncoder {
            word: embedding(config.vocab_size, config.hidden_size, e.pp("word_embeddings"))?,
            position: embedding(
                config.max_position_embeddings,
                config.hidden_size,
                e.pp("position_embeddings"),
            )?,
            token_type: embedding(config.type_vocab_size, config.hidden_size, e.pp("token_type_embeddings"))?,
            embed_norm: layer_norm(config.hidden_size, ln, e.pp("LayerNorm"))?,
            layers,
            config,
        })
    }

    pub fn config(&self) -> &BertConfig {
        &self.config
    }

    /// `token_ids`, `segment_ids`: `[batch, seq]` u32; `attention_mask`: `[batch, seq]` with 1
    /// for real tokens and 0 for padding. Returns `[batch, hidden]` classification-token states.
    pub fn forward_cls(
        &self,
        token_ids: &Tensor,
        segment_ids: &Tensor,
        attention_mask: &Tensor,
    ) -> candle_core::Result<Tensor> {
        let (b, t) = token_ids.dims2()?;
        let positions = Tensor::arange(0u32, t as u32, token_ids.device())?
            .unsqueeze(0)?
            .broadcast_as((b, t))?
            .contiguous()?;
        let x = (self.word.forward(token_ids)?
            + self.position.forward(&positions)?
            + self.token_type.forward(segment_ids)?)?;
        let mut x = self.embed_norm.forward(&x)?;
        let dtype = x.dtype();
        // additive bias: 0 for attended positions, large negative for padding
        let mask_bias = ((attention_mask.to_dtype(DType::F32)? - 1.0)? * 1e9)?
            .to_dtype(dtype)?
            .reshape((b, 1, 1, t))?;
        for layer in &self.layers {
            x = layer.forward(&x, &mask_bias)?;
        }
        x.narrow(1, 0, 1)?.squeeze(1)
    }
}
