//! Deterministic stand-in encoders with no learnable parameters.
//!
//! Text: every non-special token id `t` is hashed as `h = (t + 1) * 0x9E3779B97F4A7C15`
//! (wrapping). Bits 32..64 of `h` modulo `dim` choose a slot, bit 31 chooses the sign
//! (set = negative), and the embedding is the mean of the signed one-hot vectors. A text with
//! no ordinary tokens maps to zeros.
//!
//! Image: the per-channel spatial maximum of the `[0, 1]`-scaled input is multiplied by a
//! fixed `dim × 3` matrix drawn uniformly from `[-1, 1]` by a ChaCha8 generator seeded with
//! [`TOY_IMAGE_SEED`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::RgbTensor;

const HASH_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;
pub const TOY_IMAGE_SEED: u64 = 0x0074_6F79_5F69_6D67;

#[derive(Debug, Clone)]
pub struct ToyTextEncoder {
    dim: usize,
    special: Vec<u32>,
}

impl ToyTextEncoder {
    pub fn new(dim: usize, special: Vec<u32>) -> Self {
        ToyTextEncoder { dim, special }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slot_and_sign(&self, id: u32) -> (usize, f32) {
        let h = (id as u64 + 1).wrapping_mul(HASH_MULTIPLIER);
        let slot = ((h >> 32) % self.dim as u64) as usize;
        let sign = if (h >> 31) & 1 == 1 { -1.0 } else { 1.0 };
        (slot, sign)
    }

    pub fn embed(&self, token_ids: &[u32]) -> Vec<f32> {
        let mut out = vec![0f32; self.dim];
        let ids: Vec<u32> = token_ids
            .iter()
            .copied()
            .filter(|id| !self.special.contains(id))
            .collect();
        if ids.is_empty() {
            return out;
        }
        for &id in &ids {
            let (slot, sign) = self.slot_and_sign(id);
            out[slot] += sign;
        }
        let n = ids.len() as f32;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }
}

#[derive(Debug, Clone)]
pub struct ToyImageEncoder {
    dim: usize,
    /// Row-major `dim × 3`.
    projection: Vec<f32>,
}

impl ToyImageEncoder {
    pub fn new(dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(TOY_IMAGE_SEED);
        let projection = (0..dim * 3).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
        ToyImageEncoder { dim, projection }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global max pooling of each input channel.
    pub fn pooled_channels(&self, img: &RgbTensor) -> [f32; 3] {
        let mut m = [f32::NEG_INFINITY; 3];
        for (c, slot) in m.iter_mut().enumerate() {
            *slot = img.channel(c).iter().copied().fold(f32::NEG_INFINITY, f32::max);
        }
        m
    }

    pub fn embed(&self, img: &RgbTensor) -> Vec<f32> {
        let m = self.pooled_channels(img);
        self.projection
            .chunks_exact(3)
            .map(|row| row[0] * m[0] + row[1] * m[1] + row[2] * m[2])
            .collect()
    }
}
