//! Densely-connected CNN (121-layer configuration): growth rate 32, bottleneck width 4×,
//! blocks of 6/12/24/16 layers, transitions halving channels. Output is the global max
//! of the final ReLU'd feature maps, 1024 channels.

use candle_core::{Module, Tensor};
use candle_nn::{Conv2d, VarBuilder};

use super::cnn::{conv, global_max_pool, stem_max_pool, FrozenBatchNorm};

const GROWTH: usize = 32;
const BOTTLENECK: usize = 4;
const BLOCKS: [usize; 4] = [6, 12, 24, 16];
const STEM: usize = 64;

struct DenseLayer {
    norm1: FrozenBatchNorm,
    conv1: Conv2d,
    norm2: FrozenBatchNorm,
    conv2: Conv2d,
}

impl DenseLayer {
    fn load(cin: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let mid = BOTTLENECK * GROWTH;
        Ok(DenseLayer {
            norm1: FrozenBatchNorm::load(cin, vb.pp("norm1"))?,
            conv1: conv(cin, mid, 1, 1, 0, vb.pp("conv1"))?,
            norm2: FrozenBatchNorm::load(mid, vb.pp("norm2"))?,
            conv2: conv(mid, GROWTH, 3, 1, 1, vb.pp("conv2"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.relu()?)?;
        self.conv2.forward(&self.norm2.forward(&h)?.relu()?)
    }
}

struct Transition {
    norm: FrozenBatchNorm,
    conv: Conv2d,
}

pub struct DenseNet {
    conv0: Conv2d,
    norm0: FrozenBatchNorm,
    blocks: Vec<Vec<DenseLayer>>,
    transitions: Vec<Transition>,
    norm5: FrozenBatchNorm,
}

impl DenseNet {
    pub const OUTPUT_DIM: usize = 1024;

    pub fn load(vb: VarBuilder) -> candle_core::Result<Self> {
        let f = vb.pp("features");
        let mut channels = STEM;
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (b, &n) in BLOCKS.iter().enumerate() {
            let bvb = f.pp(format!("denseblock{}", b + 1));
            let mut layers = Vec::with_capacity(n);
            for i in 0..n {
                layers.push(DenseLayer::load(channels, bvb.pp(format!("denselayer{}", i + 1)))?);
                channels += GROWTH;
            }
            blocks.push(layers);
            if b + 1 < BLOCKS.len() {
                let tvb = f.pp(format!("transition{}", b + 1));
                transitions.push(Transition {
                    norm: FrozenBatchNorm::load(channels, tvb.pp("norm"))?,
                    conv: conv(channels, channels / 2, 1, 1, 0, tvb.pp("conv"))?,
                });
                channels /= 2;
            }
        }
        debug_assert_eq!(channels, Self::OUTPUT_DIM);
        Ok(DenseNet {
            conv0: conv(3, STEM, 7, 2, 3, f.pp("conv0"))?,
            norm0: FrozenBatchNorm::load(STEM, f.pp("norm0"))?,
            blocks,
            transitions,
            norm5: FrozenBatchNorm::load(channels, f.pp("norm5"))?,
        })
    }

    /// Final activated feature maps, `[batch, 1024, h/32, w/32]`.
    pub fn feature_maps(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut x = stem_max_pool(&self.norm0.forward(&self.conv0.forward(x)?)?.relu()?)?;
        for (b, layers) in self.blocks.iter().enumerate() {
            let mut features = vec![x];
            for layer in layers {
                let input = Tensor::cat(&features, 1)?;
                features.push(layer.forward(&input)?);
            }
            x = Tensor::cat(&features, 1)?;
            if let Some(t) = self.transitions.get(b) {
                x = t.conv.forward(&t.norm.forward(&x)?.relu()?)?.avg_pool2d(2)?;
            }
        }
        self.norm5.forward(&x)?.relu()
    }

    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        global_max_pool(&self.feature_maps(x)?)
    }
}
