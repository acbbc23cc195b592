//! Noise predictors and their conditioning inputs.
//!
//! [`ToyDenoiser`] is a small seeded network with the same interface as a
//! structure- and style-conditioned U-Net: a pointwise lift of the latent,
//! an additive projection of the structure conditioning scaled by
//! `cnt_scale`, one decoupled cross-attention block over the style tokens,
//! and a pointwise projection back to latent channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{decoupled_cross_attention, matmul, random_matrix, AttentionWeights};
use crate::error::{ensure, Result};
use crate::features::FeatureMap;
use crate::tensor::Tensor;

/// Style tokens for the two attention branches.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleConditioning {
    /// `[text_tokens, token_dim]` fixed prompt embedding.
    pub text: Tensor,
    /// `[image_tokens, token_dim]` image tokens.
    pub image: Tensor,
    /// Image-branch weight.
    pub lambda: f32,
}

/// Everything a denoiser is conditioned on besides `z_t` and `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conditioning {
    /// Structure conditioning `[3C, H, W]`, spatially aligned with `z_t`.
    pub content: Option<Tensor>,
    pub style: Option<StyleConditioning>,
}

/// Predicts the noise in `z_t` at timestep `t`.
pub trait Denoiser: Sync {
    fn predict(&self, z_t: &Tensor, t: usize, cond: &Conditioning) -> Result<Tensor>;
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, z_t: &Tensor, _t: usize, _cond: &Conditioning) -> Result<Tensor> {
        Ok(z_t.map(|_| 0.0))
    }
}

/// Predicts `scale · z_t`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDenoiser {
    pub scale: f32,
}

impl Denoiser for LinearDenoiser {
    fn predict(&self, z_t: &Tensor, _t: usize, _cond: &Conditioning) -> Result<Tensor> {
        Ok(z_t.map(|v| self.scale * v))
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, z_t: &Tensor, t: usize, cond: &Conditioning) -> Result<Tensor> {
        (**self).predict(z_t, t, cond)
    }
}

/// Shape and seed of a [`ToyDenoiser`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiserConfig {
    pub latent_channels: usize,
    pub hidden: usize,
    pub token_dim: usize,
    pub key_dim: usize,
    /// Multiplier on the structure-conditioning injection; 0 disables it.
    pub cnt_scale: f32,
    /// Scale of the output projection; bounds the predicted noise.
    pub output_gain: f32,
    pub seed: u64,
}

impl Default for ToyDenoiserConfig {
    fn default() -> Self {
        Self {
            latent_channels: 3,
            hidden: 16,
            token_dim: 16,
            key_dim: 16,
            cnt_scale: 1.0,
            output_gain: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    config: ToyDenoiserConfig,
    w_in: Tensor,
    b_in: Vec<f32>,
    w_cnt: Tensor,
    time_freq: Vec<f32>,
    time_phase: Vec<f32>,
    attention: AttentionWeights,
    w_out: Tensor,
}

impl ToyDenoiser {
    pub fn new(config: ToyDenoiserConfig) -> Result<Self> {
        let c = config.latent_channels;
        let d = config.hidden;
        ensure!(
            c >= 1 && d >= 1 && config.token_dim >= 1 && config.key_dim >= 1,
            Precondition,
            "denoiser dimensions must be positive"
        );
        ensure!(
            config.cnt_scale.is_finite() && config.output_gain.is_finite(),
            Precondition,
            "denoiser scales must be finite"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w_in = random_matrix(c, d, &mut rng);
        let b_in = (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let w_cnt = random_matrix(3 * c, d, &mut rng);
        let time_freq = (0..d)
            .map(|j| (-(j as f32) / d as f32 * 9.0).exp())
            .collect();
        let time_phase = (0..d)
            .map(|_| rng.gen_range(0.0..std::f32::consts::TAU))
            .collect();
        let attention = AttentionWeights::random(d, config.token_dim, config.key_dim, &mut rng);
        let w_out = random_matrix(d, c, &mut rng).map(|v| v * config.output_gain);
        Ok(Self {
            config,
            w_in,
            b_in,
            w_cnt,
            time_freq,
            time_phase,
            attention,
            w_out,
        })
    }

    pub fn config(&self) -> &ToyDenoiserConfig {
        &self.config
    }

    /// Largest absolute value any output element can take: the maximum
    /// column L1 norm of the output projection.
    pub fn output_bound(&self) -> f32 {
        let (d, c) = (self.config.hidden, self.config.latent_channels);
        let w = self.w_out.data();
        (0..c)
            .map(|k| (0..d).map(|j| w[j * c + k].abs()).sum::<f32>())
            .fold(0.0, f32::max)
    }
}

impl Denoiser for ToyDenoiser {
    fn predict(&self, z_t: &Tensor, t: usize, cond: &Conditioning) -> Result<Tensor> {
        let (c, h, w) = z_t.dims3()?;
        let cfg = &self.config;
        ensure!(
            c == cfg.latent_channels,
            Shape,
            "latent has {} channels, denoiser expects {}",
            c,
            cfg.latent_channels
        );
        let n = h * w;
        let d = cfg.hidden;

        let mut hidden = matmul(&channels_last(z_t), &self.w_in)?.into_data();
        for (j, (b, (f, p))) in self
            .b_in
            .iter()
            .zip(self.time_freq.iter().zip(&self.time_phase))
            .enumerate()
        {
            let temb = b + 0.5 * (t as f32 * f + p).sin();
            for row in 0..n {
                hidden[row * d + j] += temb;
            }
        }

        if let (Some(cnt), true) = (&cond.content, cfg.cnt_scale != 0.0) {
            ensure!(
                cnt.shape() == [3 * c, h, w],
                Shape,
                "structure conditioning {:?} does not match latent {:?}",
                cnt.shape(),
                [3 * c, h, w]
            );
            let injected = matmul(&channels_last(cnt), &self.w_cnt)?;
            for (hv, iv) in hidden.iter_mut().zip(injected.data()) {
                *hv += cfg.cnt_scale * iv;
            }
        }
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut hidden = Tensor::new([n, d], hidden)?;

        if let Some(style) = &cond.style {
            for tokens in [&style.text, &style.image] {
                ensure!(
                    tokens.rank() == 2 && tokens.shape()[1] == cfg.token_dim,
                    Shape,
                    "style tokens {:?} must be [M, {}]",
                    tokens.shape(),
                    cfg.token_dim
                );
            }
            let attended = decoupled_cross_attention(
                &hidden,
                &style.text,
                &style.image,
                &self.attention,
                style.lambda,
            )?;
            hidden = hidden.zip_map(&attended, |a, b| a + b)?;
        }

        let eps = matmul(&hidden.map(f32::tanh), &self.w_out)?;
        channels_first(&eps, h, w)
    }
}

/// `[C, H, W]` to `[H·W, C]`.
fn channels_last(x: &Tensor) -> Tensor {
    let (c, h, w) = x.dims3().expect("checked by caller");
    let n = h * w;
    let src = x.data();
    Tensor::from_fn([n, c], |i| src[(i % c) * n + i / c]).expect("positive dims")
}

/// `[H·W, C]` to `[C, H, W]`.
fn channels_first(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let c = x.shape()[1];
    let n = h * w;
    let src = x.data();
    Tensor::from_fn([c, h, w], |i| src[(i % n) * c + i / n])
}

/// Builds deterministic style tokens: a seeded constant prompt embedding and
/// image tokens pooled from feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleEncoder {
    pub seed: u64,
    pub token_dim: usize,
    pub text_tokens: usize,
    /// Image tokens are one global token plus `patch_grid²` regional ones.
    pub patch_grid: usize,
}

impl Default for StyleEncoder {
    fn default() -> Self {
        Self {
            seed: 0,
            token_dim: 16,
            text_tokens: 4,
            patch_grid: 4,
        }
    }
}

impl StyleEncoder {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// The fixed prompt embedding, `[text_tokens, token_dim]`.
    pub fn text_embedding(&self) -> Tensor {
        let mut rng = self.rng(1);
        Tensor::from_fn([self.text_tokens, self.token_dim], |_| {
            rng.gen_range(-1.0..1.0)
        })
        .expect("positive dims")
    }

    /// `[1 + patch_grid², token_dim]` tokens: the global mean feature and
    /// regional means, each projected by a seeded matrix and squashed.
    pub fn image_tokens(&self, features: &FeatureMap) -> Result<Tensor> {
        ensure!(
            self.patch_grid >= 1,
            Precondition,
            "patch grid must be positive"
        );
        let (gh, gw) = features.grid();
        let ch = features.channels();
        let p = self.patch_grid;
        let span = |k: usize, n: usize| {
            let lo = (k * n / p).min(n - 1);
            let hi = ((k + 1) * n / p).max(lo + 1).min(n);
            lo..hi
        };
        let mean_over = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
            let mut acc = vec![0.0f64; ch];
            let mut count = 0.0;
            for y in rows {
                for x in cols.clone() {
                    for (a, &v) in acc.iter_mut().zip(features.vector(y * gw + x)) {
                        *a += v as f64;
                    }
                    count += 1.0;
                }
            }
            acc.into_iter().map(move |a| (a / count) as f32)
        };
        let mut pooled: Vec<f32> = mean_over(0..gh, 0..gw).collect();
        for py in 0..p {
            for px in 0..p {
                pooled.extend(mean_over(span(py, gh), span(px, gw)));
            }
        }
        let pooled = Tensor::new([1 + p * p, ch], pooled)?;
        // projection depends on the feature width, so seed its stream with it
        let mut rng = self.rng(2 + ch as u64);
        let proj = random_matrix(ch, self.token_dim, &mut rng);
        Ok(matmul(&pooled, &proj)?.map(|v| (4.0 * v).tanh()))
    }

    /// Style conditioning whose image tokens are already computed.
    pub fn conditioning(&self, image_tokens: Tensor, lambda: f32) -> StyleConditioning {
        StyleConditioning {
            text: self.text_embedding(),
            image: image_tokens,
            lambda,
        }
    }
}
