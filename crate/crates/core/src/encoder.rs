//! Requirement sentence → sentence embedding `z0` → latent `z`.
//!
//! The text encoder hashes lowercase word tokens into an embedding table,
//! prepends a learned `[CLS]` vector, replaces position 0 with the uniform
//! mean over all positions, and applies one learned linear map. The
//! sentence embedding is position 0 of the result. A two-layer ReLU MLP then
//! maps it to the latent consumed by the generator heads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{dot, Tensor};

/// Lowercase, split on runs of non-alphanumeric characters, drop empties.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn token_id(token: &str, vocab: usize) -> usize {
    (fnv1a64(token.as_bytes()) % vocab as u64) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub cls: Tensor,
    /// `vocab × d0`
    pub table: Tensor,
    /// `d0 → d0`
    pub mix: Linear,
}

impl EncoderParams {
    pub fn init<R: Rng>(vocab: usize, d0: usize, rng: &mut R) -> Result<Self> {
        if vocab == 0 || d0 == 0 {
            return Err(Error::Config("encoder vocabulary and width must be positive".into()));
        }
        let mut normal = |n: usize| -> Vec<f32> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
        let cls = Tensor::vector(normal(d0))?;
        let table = Tensor::new(vec![vocab, d0], normal(vocab * d0))?;
        let mix = Linear::init_uniform(d0, d0, rng)?;
        Ok(Self { cls, table, mix })
    }

    pub fn dim(&self) -> usize {
        self.cls.len()
    }

    pub fn vocab(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let d0 = self.dim();
        if self.table.rank() != 2 || self.table.shape()[1] != d0 {
            return Err(Error::shape(format!(
                "token table {:?} does not match embedding width {d0}",
                self.table.shape()
            )));
        }
        if self.mix.in_dim() != d0 || self.mix.out_dim() != d0 {
            return Err(Error::shape("encoder mixing layer must be d0 → d0"));
        }
        Ok(())
    }
}

/// What the encoder backward pass needs from the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeCache {
    token_ids: Vec<usize>,
    pooled: Vec<f32>,
}

/// Sentence embedding of `sentence`; also returns the backward cache.
pub fn encode(sentence: &str, enc: &EncoderParams) -> Result<(Tensor, EncodeCache)> {
    enc.validate()?;
    let d0 = enc.dim();
    let token_ids: Vec<usize> = tokenize(sentence)
        .iter()
        .map(|t| token_id(t, enc.vocab()))
        .collect();
    let mut sum: Vec<f64> = enc.cls.data().iter().map(|&v| v as f64).collect();
    for &id in &token_ids {
        for (s, &e) in sum.iter_mut().zip(enc.table.row(id)) {
            *s += e as f64;
        }
    }
    let count = (token_ids.len() + 1) as f64;
    let pooled: Vec<f32> = sum.iter().map(|s| (s / count) as f32).collect();
    let z0 = affine(&enc.mix, &pooled);
    Ok((Tensor::new(vec![d0], z0)?, EncodeCache { token_ids, pooled }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    /// `d0 → d`
    pub first: Linear,
    /// `d → d`
    pub second: Linear,
}

impl TransformParams {
    pub fn init<R: Rng>(d0: usize, d: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            first: Linear::init_uniform(d0, d, rng)?,
            second: Linear::init_uniform(d, d, rng)?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.second.out_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformCache {
    z0: Vec<f32>,
    hidden_pre: Vec<f32>,
}

pub fn transform(z0: &Tensor, tp: &TransformParams) -> Result<(Tensor, TransformCache)> {
    if z0.shape() != [tp.in_dim()] {
        return Err(Error::shape(format!(
            "transform expects a {}-vector, got shape {:?}",
            tp.in_dim(),
            z0.shape()
        )));
    }
    if tp.second.in_dim() != tp.first.out_dim() {
        return Err(Error::shape("transform layers do not chain"));
    }
    let hidden_pre = affine(&tp.first, z0.data());
    let hidden: Vec<f32> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let z = affine(&tp.second, &hidden);
    Ok((
        Tensor::vector(z)?,
        TransformCache {
            z0: z0.data().to_vec(),
            hidden_pre,
        },
    ))
}

/// Accumulates `∂/∂θm` into `grads` and returns `∂/∂z0`.
pub fn transform_backward(
    grad_z: &[f32],
    tp: &TransformParams,
    cache: &TransformCache,
    grads: &mut TransformParams,
) -> Vec<f32> {
    let hidden: Vec<f32> = cache.hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let g_hidden = affine_backward(&tp.second, &hidden, grad_z, &mut grads.second);
    let g_pre: Vec<f32> = g_hidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
        .collect();
    affine_backward(&tp.first, &cache.z0, &g_pre, &mut grads.first)
}

/// Accumulates `∂/∂θe` into `grads` given `∂/∂z0`.
pub fn encode_backward(grad_z0: &[f32], enc: &EncoderParams, cache: &EncodeCache, grads: &mut EncoderParams) {
    let g_pooled = affine_backward(&enc.mix, &cache.pooled, grad_z0, &mut grads.mix);
    let share = 1.0 / (cache.token_ids.len() + 1) as f32;
    for (g, gp) in grads.cls.data_mut().iter_mut().zip(&g_pooled) {
        *g += gp * share;
    }
    let d0 = enc.dim();
    let table = grads.table.data_mut();
    for &id in &cache.token_ids {
        for (g, gp) in table[id * d0..(id + 1) * d0].iter_mut().zip(&g_pooled) {
            *g += gp * share;
        }
    }
}

pub(crate) fn affine(layer: &Linear, x: &[f32]) -> Vec<f32> {
    let inn = layer.in_dim();
    layer
        .weight
        .data()
        .chunks(inn)
        .zip(layer.bias.data())
        .map(|(w, &b)| (dot(w, x) + b as f64) as f32)
        .collect()
}

/// Accumulates weight and bias gradients of `y = Wx + b`; returns `∂/∂x`.
pub(crate) fn affine_backward(layer: &Linear, x: &[f32], grad_y: &[f32], grads: &mut Linear) -> Vec<f32> {
    let inn = layer.in_dim();
    let gw = grads.weight.data_mut();
    for (o, &g) in grad_y.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (gwi, &xi) in gw[o * inn..(o + 1) * inn].iter_mut().zip(x) {
            *gwi += g * xi;
        }
    }
    for (gb, &g) in grads.bias.data_mut().iter_mut().zip(grad_y) {
        *gb += g;
    }
    let w = layer.weight.data();
    (0..inn)
        .map(|i| {
            grad_y
                .iter()
                .enumerate()
                .map(|(o, &g)| g as f64 * w[o * inn + i] as f64)
                .sum::<f64>() as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(d: usize) -> Linear {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        Linear::new(Tensor::new(vec![d, d], w).unwrap(), Tensor::zeros(vec![d]).unwrap()).unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Binary, sentiment-analysis!"), vec!["binary", "sentiment", "analysis"]);
        assert_eq!(tokenize("A"), vec!["a"]);
        assert!(tokenize("  .  ").is_empty());
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_sentence_gives_cls() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut enc = EncoderParams::init(16, 5, &mut rng).unwrap();
        enc.mix = identity(5);
        let (z0, _) = encode(" ... ", &enc).unwrap();
        assert_eq!(z0.data(), enc.cls.data());
    }

    #[test]
    fn one_token_is_mean_with_cls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = EncoderParams::init(16, 4, &mut rng).unwrap();
        enc.mix = identity(4);
        let (z0, _) = encode("Wine", &enc).unwrap();
        let row = enc.table.row(token_id("wine", 16));
        for ((&z, &c), &r) in z0.data().iter().zip(enc.cls.data()).zip(row) {
            let want = (c as f64 + r as f64) / 2.0;
            assert!((z as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = EncoderParams::init(64, 8, &mut rng).unwrap();
        let a = encode("This is a tabular regression task.", &enc).unwrap().0;
        let b = encode("This is a tabular regression task.", &enc).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn identity_transform_passes_nonnegative_input() {
        let tp = TransformParams {
            first: identity(3),
            second: identity(3),
        };
        let z0 = Tensor::vector(vec![0.5, 0.0, 2.0]).unwrap();
        assert_eq!(transform(&z0, &tp).unwrap().0, z0);
    }

    #[test]
    fn zero_transform_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tp = TransformParams::init(4, 3, &mut rng).unwrap();
        tp.first.weight.data_mut().fill(0.0);
        tp.second.weight.data_mut().fill(0.0);
        let z = transform(&Tensor::vector(vec![1.0, -1.0, 2.0, 3.0]).unwrap(), &tp).unwrap().0;
        assert_eq!(z.data(), tp.second.bias.data());
    }

    #[test]
    fn transform_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tp = TransformParams::init(4, 3, &mut rng).unwrap();
        assert!(transform(&Tensor::vector(vec![1.0; 5]).unwrap(), &tp).is_err());
    }
}
