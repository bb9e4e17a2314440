//! Residual CNN (50-layer bottleneck configuration, stride on the 3×3 convolution).
//! Output is the global max of the last stage, 2048 channels.

use candle_core::{Module, Tensor};
use candle_nn::{Conv2d, VarBuilder};

use super::cnn::{conv, global_max_pool, stem_max_pool, FrozenBatchNorm};

const STAGES: [(usize, usize); 4] = [(3, 64), (4, 128), (6, 256), (3, 512)];
const EXPANSION: usize = 4;

struct Bottleneck {
    conv1: Conv2d,
    bn1: FrozenBatchNorm,
    conv2: Conv2d,
    bn2: FrozenBatchNorm,
    conv3: Conv2d,
    bn3: FrozenBatchNorm,
    downsample: Option<(Conv2d, FrozenBatchNorm)>,
}

impl Bottleneck {
    fn load(cin: usize, width: usize, stride: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let cout = width * EXPANSION;
        let downsample = if stride != 1 || cin != cout {
            Some((
                conv(cin, cout, 1, stride, 0, vb.pp("downsample.0"))?,
                FrozenBatchNorm::load(cout, vb.pp("downsample.1"))?,
            ))
        } else {
            None
        };
        Ok(Bottleneck {
            conv1: conv(cin, width, 1, 1, 0, vb.pp("conv1"))?,
            bn1: FrozenBatchNorm::load(width, vb.pp("bn1"))?,
            conv2: conv(width, width, 3, stride, 1, vb.pp("conv2"))?,
            bn2: FrozenBatchNorm::load(width, vb.pp("bn2"))?,
            conv3: conv(width, cout, 1, 1, 0, vb.pp("conv3"))?,
            bn3: FrozenBatchNorm::load(cout, vb.pp("bn3"))?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?)?.relu()?;
        let h = self.bn3.forward(&self.conv3.forward(&h)?)?;
        let shortcut = match &self.downsample {
            Some((c, bn)) => bn.forward(&c.forward(x)?)?,
            None => x.clone(),
        };
        (h + shortcut)?.relu()
    }
}

pub struct ResNet {
    conv1: Conv2d,
    bn1: FrozenBatchNorm,
    stages: Vec<Vec<Bottleneck>>,
}

impl ResNet {
    pub const OUTPUT_DIM: usize = 2048;

    pub fn load(vb: VarBuilder) -> candle_core::Result<Self> {
        let mut cin = 64;
        let mut stages = Vec::new();
        for (s, &(n, width)) in STAGES.iter().enumerate() {
            let svb = vb.pp(format!("layer{}", s + 1));
            let mut blocks = Vec::with_capacity(n);
            for i in 0..n {
                let stride = if i == 0 && s > 0 { 2 } else { 1 };
                blocks.push(Bottleneck::load(cin, width, stride, svb.pp(i.to_string()))?);
                cin = width * EXPANSION;
            }
            stages.push(blocks);
        }
        Ok(ResNet {
            conv1: conv(3, 64, 7, 2, 3, vb.pp("conv1"))?,
            bn1: FrozenBatchNorm::load(64, vb.pp("bn1"))?,
            stages,
        })
    }

    /// Last-stage feature maps, `[batch, 2048, h/32, w/32]`.
    pub fn feature_maps(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut x = stem_max_pool(&self.bn1.forward(&self.conv1.forward(x)?)?.relu()?)?;
        for block in self.stages.iter().flatten() {
            x = block.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        global_max_pool(&self.feature_maps(x)?)
    }
}
