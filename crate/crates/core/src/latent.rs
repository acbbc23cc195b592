//! Latent initialization: AdaIN, the AdaIN-Wavelet blend and stylization
//! strength interpolation.

use crate::error::{ensure, Result};
use crate::tensor::Tensor;
use crate::wavelet::{dwt_haar, idwt_haar, SubbandSet};

/// Floor added to the variance before the square root.
pub const STD_EPS: f64 = 1e-6;

/// Default stylization strength.
pub const DEFAULT_GAMMA: f32 = 1.0;

/// Per-channel mean and standard deviation over spatial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    /// `sqrt(var + STD_EPS)`, always positive.
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn of(x: &Tensor) -> Result<Self> {
        let (c, h, w) = x.dims3()?;
        let n = (h * w) as f64;
        let mut mean = Vec::with_capacity(c);
        let mut std = Vec::with_capacity(c);
        for plane in x.data().chunks_exact(h * w) {
            let m = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = plane
                .iter()
                .map(|&v| {
                    let d = v as f64 - m;
                    d * d
                })
                .sum::<f64>()
                / n;
            mean.push(m);
            std.push((var + STD_EPS).sqrt());
        }
        Ok(Self { mean, std })
    }
}

/// Re-normalizes each channel of `content` to the mean and standard
/// deviation of the matching `style` channel. Spatial sizes may differ.
pub fn adain(content: &Tensor, style: &Tensor) -> Result<Tensor> {
    let (c, h, w) = content.dims3()?;
    let (cs, _, _) = style.dims3()?;
    ensure!(c == cs, Shape, "channel counts differ: {} vs {}", c, cs);
    let src = ChannelStats::of(content)?;
    let dst = ChannelStats::of(style)?;
    let mut out = Vec::with_capacity(content.len());
    for (k, plane) in content.data().chunks_exact(h * w).enumerate() {
        let scale = dst.std[k] / src.std[k];
        out.extend(
            plane
                .iter()
                .map(|&v| ((v as f64 - src.mean[k]) * scale + dst.mean[k]) as f32),
        );
    }
    Tensor::new([c, h, w], out)
}

/// Blends the low-frequency band of `reference_latent` with the high-frequency bands of
/// `adain(input_latent, reference_latent)`.
pub fn adain_wavelet_init(input_latent: &Tensor, reference_latent: &Tensor) -> Result<Tensor> {
    ensure!(
        input_latent.shape() == reference_latent.shape(),
        Shape,
        "latent shapes differ: {:?} vs {:?}",
        input_latent.shape(),
        reference_latent.shape()
    );
    let restyled = dwt_haar(&adain(input_latent, reference_latent)?)?;
    let reference = dwt_haar(reference_latent)?;
    idwt_haar(&SubbandSet {
        ll: reference.ll,
        ..restyled
    })
}

fn check_gamma(gamma: f32) -> Result<()> {
    ensure!(
        (0.0..=1.0).contains(&gamma),
        Precondition,
        "gamma must lie in [0, 1], got {}",
        gamma
    );
    Ok(())
}

fn lerp(target: &Tensor, origin: &Tensor, gamma: f32) -> Result<Tensor> {
    check_gamma(gamma)?;
    ensure!(
        target.shape() == origin.shape(),
        Shape,
        "{:?} vs {:?}",
        target.shape(),
        origin.shape()
    );
    // endpoints are returned verbatim so they are bit-exact
    if gamma == 0.0 {
        return Ok(origin.clone());
    }
    if gamma == 1.0 {
        return Ok(target.clone());
    }
    target.zip_map(origin, |a, b| gamma * a + (1.0 - gamma) * b)
}

/// `gamma * blended + (1 - gamma) * input_latent`.
pub fn interpolate_strength(blended: &Tensor, input_latent: &Tensor, gamma: f32) -> Result<Tensor> {
    lerp(blended, input_latent, gamma)
}

/// `gamma * c_ref + (1 - gamma) * c_input` on conditioning embeddings.
pub fn interpolate_conditioning(c_ref: &Tensor, c_input: &Tensor, gamma: f32) -> Result<Tensor> {
    lerp(c_ref, c_input, gamma)
}
