use candle_core::{Module, Tensor, D};
use candle_nn::{Conv2d, Conv2dConfig, VarBuilder};

/// Batch normalization evaluated with its stored running statistics.
pub(crate) struct FrozenBatchNorm {
    weight: Tensor,
    bias: Tensor,
    mean: Tensor,
    var: Tensor,
    eps: f64,
}

impl FrozenBatchNorm {
    pub(crate) fn load(channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(FrozenBatchNorm {
            weight: vb.get(channels, "weight")?,
            bias: vb.get(channels, "bias")?,
            mean: vb.get(channels, "running_mean")?,
            var: vb.get(channels, "running_var")?,
            eps: 1e-5,
        })
    }
}

impl Module for FrozenBatchNorm {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let c = self.weight.dim(0)?;
        let shape = (1, c, 1, 1);
        let inv_std = (&self.var + self.eps)?.sqrt()?.recip()?.reshape(shape)?;
        let centered = x.broadcast_sub(&self.mean.reshape(shape)?)?;
        centered
            .broadcast_mul(&inv_std)?
            .broadcast_mul(&self.weight.reshape(shape)?)?
            .broadcast_add(&self.bias.reshape(shape)?)
    }
}

pub(crate) fn conv(
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    vb: VarBuilder,
) -> candle_core::Result<Conv2d> {
    let cfg = Conv2dConfig {
        stride,
        padding,
        ..Default::default()
    };
    candle_nn::conv2d_no_bias(cin, cout, kernel, cfg, vb)
}

/// 3×3 stride-2 max pooling with one pixel of padding. Inputs are post-ReLU, so zero padding
/// is equivalent to padding with negative infinity.
pub(crate) fn stem_max_pool(x: &Tensor) -> candle_core::Result<Tensor> {
    x.pad_with_zeros(2, 1, 1)?
        .pad_with_zeros(3, 1, 1)?
        .max_pool2d_with_stride(3, 2)
}

/// `[batch, channels, h, w]` to `[batch, channels]` by spatial maximum.
pub(crate) fn global_max_pool(x: &Tensor) -> candle_core::Result<Tensor> {
    x.flatten_from(2)?.max(D::Minus1)
}
