//! End-to-end transfer: correspondence, warping, conditioning, latent
//! initialization and sampling.
//!
//! Latents are the image planes themselves (optionally box-downsampled by 2),
//! so every latent-space step operates on `[C, H, W]` pixel tensors.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correspondence::{
    correlation_matrix, cyclic_warp_loss, feature_l1_distance, mask_warp_loss, pool_to_grid,
    similarity_map, warp_image, warp_mask, CorrelationMatrix, SemanticMask, DEFAULT_TAU,
};
use crate::diffusion::{
    ddim_invert, ddim_sample, forward_noise, noise_pred_loss, stage1_total_loss, Conditioning,
    Denoiser, InversionOptions, ScheduleConfig, StyleEncoder, ToyDenoiser, ToyDenoiserConfig,
    DEFAULT_INVERSION_STEPS, DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_M, DEFAULT_SAMPLING_STEPS,
};
use crate::error::{ensure, Error, Result, StageExt};
use crate::features::{extract_features, FeatureConfig};
use crate::io::{read_png, write_png};
use crate::latent::{
    adain_wavelet_init, interpolate_conditioning, interpolate_strength, DEFAULT_GAMMA,
};
use crate::tensor::{Image, Tensor};
use crate::wavelet::{high_freq_conditioning_tensor, upsample_bilinear2};

/// Numeric knobs of a transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferParams {
    /// Stylization strength in `[0, 1]`.
    pub gamma: f32,
    /// Warping softmax temperature.
    pub tau: f32,
    pub stride: usize,
    pub scales: usize,
    /// Image-branch attention weight.
    pub lambda: f32,
    /// Structure-conditioning scale.
    pub cnt_scale: f32,
    pub steps_inversion: usize,
    pub steps_sampling: usize,
    pub seed: u64,
    /// Width in pixels of the blend ramp at region boundaries.
    pub feather: f32,
    /// Labels of the input mask whose warped-reference pixels are kept.
    pub regions: Option<Vec<u32>>,
    /// Encode latents at half resolution.
    pub latent_downsample: bool,
    pub schedule: ScheduleConfig,
    pub inversion_refinements: usize,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            tau: DEFAULT_TAU,
            stride: 8,
            scales: 3,
            lambda: 1.0,
            cnt_scale: 1.0,
            steps_inversion: DEFAULT_INVERSION_STEPS,
            steps_sampling: DEFAULT_SAMPLING_STEPS,
            seed: 0,
            feather: 0.0,
            regions: None,
            latent_downsample: false,
            schedule: ScheduleConfig::default(),
            inversion_refinements: InversionOptions::default().refinements,
        }
    }
}

impl TransferParams {
    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            stride: self.stride,
            scales: self.scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.gamma),
            Precondition,
            "gamma must lie in [0, 1], got {}",
            self.gamma
        );
        ensure!(
            self.tau > 0.0 && self.tau.is_finite(),
            Precondition,
            "tau must be positive, got {}",
            self.tau
        );
        ensure!(
            self.steps_inversion >= 1 && self.steps_sampling >= 1,
            Precondition,
            "step counts must be at least 1"
        );
        ensure!(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            Precondition,
            "lambda must be non-negative, got {}",
            self.lambda
        );
        ensure!(
            self.cnt_scale.is_finite(),
            Precondition,
            "cnt_scale must be finite"
        );
        ensure!(
            self.feather >= 0.0 && self.feather.is_finite(),
            Precondition,
            "feather must be non-negative, got {}",
            self.feather
        );
        self.features().validate()
    }

    /// Images are replicate-padded to a multiple of this.
    pub fn pad_multiple(&self) -> usize {
        if self.latent_downsample {
            4 * self.stride
        } else {
            2 * self.stride
        }
    }

    fn denoiser(&self, channels: usize) -> Result<ToyDenoiser> {
        ToyDenoiser::new(ToyDenoiserConfig {
            latent_channels: channels,
            cnt_scale: self.cnt_scale,
            seed: self.seed,
            ..Default::default()
        })
    }

    fn style_encoder(&self) -> StyleEncoder {
        StyleEncoder {
            seed: self.seed,
            ..Default::default()
        }
    }

    fn inversion(&self) -> InversionOptions {
        InversionOptions {
            refinements: self.inversion_refinements,
            ..Default::default()
        }
    }
}

/// Paths plus parameters, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub input: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub input_mask: Option<PathBuf>,
    #[serde(default)]
    pub reference_mask: Option<PathBuf>,
    pub out: PathBuf,
    /// Content grid cell whose similarity map is written as `<out>.sim.png`.
    #[serde(default)]
    pub similarity_query: Option<usize>,
    #[serde(flatten)]
    pub params: TransferParams,
}

impl TransferConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}

/// `foo.png` → `foo.<suffix>.png`.
pub fn sibling_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.png"))
}

/// Result of [`transfer`], all images at the input's original size.
#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub output: Image,
    pub warped_reference: Image,
    pub correlation: CorrelationMatrix,
    pub similarity: Option<Image>,
    /// Inverted latents of the input and the warped reference.
    pub inverted_input: Tensor,
    pub inverted_reference: Tensor,
    /// Latent the sampler starts from.
    pub initial_latent: Tensor,
    /// Mask warping loss, when both masks were supplied.
    pub mask_loss: Option<f32>,
}

/// Masks accompanying a transfer.
#[derive(Debug, Clone, Copy, Default)]
pub struct Masks<'a> {
    pub input: Option<&'a SemanticMask>,
    pub reference: Option<&'a SemanticMask>,
}

/// Paths written by [`run_transfer`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub output: PathBuf,
    pub warped_reference: PathBuf,
    pub similarity: Option<PathBuf>,
    pub mask_loss: Option<f32>,
}

/// Reads the files named in `cfg`, runs [`transfer`] and writes the output,
/// the warped reference (`.warped.png`) and optionally the similarity map
/// (`.sim.png`).
pub fn run_transfer(cfg: &TransferConfig) -> Result<WrittenFiles> {
    let input = read_png(&cfg.input).stage("read input")?;
    let reference = read_png(&cfg.reference).stage("read reference")?;
    let input_mask = cfg
        .input_mask
        .as_ref()
        .map(|p| SemanticMask::read_png(p, None))
        .transpose()
        .stage("read input mask")?;
    let reference_mask = cfg
        .reference_mask
        .as_ref()
        .map(|p| SemanticMask::read_png(p, None))
        .transpose()
        .stage("read reference mask")?;
    let (input_mask, reference_mask) = share_classes(input_mask, reference_mask)?;
    let result = transfer(
        &input,
        &reference,
        Masks {
            input: input_mask.as_ref(),
            reference: reference_mask.as_ref(),
        },
        cfg.similarity_query,
        &cfg.params,
    )?;

    let warped_path = sibling_path(&cfg.out, "warped");
    write_png(&result.output, &cfg.out).stage("write output")?;
    write_png(&result.warped_reference, &warped_path).stage("write warped reference")?;
    let similarity = match &result.similarity {
        Some(map) => {
            let p = sibling_path(&cfg.out, "sim");
            write_png(map, &p).stage("write similarity map")?;
            Some(p)
        }
        None => None,
    };
    Ok(WrittenFiles {
        output: cfg.out.clone(),
        warped_reference: warped_path,
        similarity,
        mask_loss: result.mask_loss,
    })
}

/// Gives two optional masks the same class count.
pub fn share_classes(
    a: Option<SemanticMask>,
    b: Option<SemanticMask>,
) -> Result<(Option<SemanticMask>, Option<SemanticMask>)> {
    let k = a
        .iter()
        .chain(b.iter())
        .map(|m| m.num_classes())
        .max()
        .unwrap_or(1);
    Ok((
        a.map(|m| m.with_num_classes(k)).transpose()?,
        b.map(|m| m.with_num_classes(k)).transpose()?,
    ))
}

/// Correlation between padded input and reference plus the warped
/// reference at padded input size.
struct Aligned {
    input: Image,
    reference: Image,
    correlation: CorrelationMatrix,
    warped: Image,
}

fn align(
    input: &Image,
    reference: &Image,
    tau: f32,
    multiple: usize,
    features: FeatureConfig,
) -> Result<Aligned> {
    let (input, reference) = unify_channels(input, reference)?;
    let input = pad_to_multiple(&input, multiple)?;
    let reference = pad_to_multiple(&reference, multiple)?;
    let fc = extract_features(&input, features).stage("features")?;
    let fs = extract_features(&reference, features).stage("features")?;
    let correlation = correlation_matrix(&fc, &fs).stage("correlation")?;
    let warped = warp_image(&correlation, &reference, tau).stage("warp")?;
    Ok(Aligned {
        input,
        reference,
        correlation,
        warped,
    })
}

/// Warped reference only, cropped to the input size.
pub fn warp_reference(
    input: &Image,
    reference: &Image,
    tau: f32,
    features: FeatureConfig,
) -> Result<(Image, CorrelationMatrix)> {
    features.validate()?;
    let a = align(input, reference, tau, features.stride, features)?;
    let warped = a.warped.crop(input.height(), input.width())?;
    Ok((warped, a.correlation))
}

/// Similarity heatmap for one content cell, cropped to the reference size.
pub fn similarity_for(
    corr: &CorrelationMatrix,
    query: usize,
    stride: usize,
    reference: &Image,
) -> Result<Image> {
    similarity_map(corr, query, stride)
        .stage("similarity")?
        .crop(reference.height(), reference.width())
}

/// Runs the full transfer on in-memory images.
pub fn transfer(
    input: &Image,
    reference: &Image,
    masks: Masks<'_>,
    similarity_query: Option<usize>,
    params: &TransferParams,
) -> Result<TransferOutput> {
    params.validate().stage("validate")?;
    let (h, w) = (input.height(), input.width());
    let multiple = params.pad_multiple();
    let feature_cfg = params.features();
    let Aligned {
        input: padded_input,
        reference: padded_reference,
        correlation,
        mut warped,
    } = align(input, reference, params.tau, multiple, feature_cfg)?;

    let padded_mask = masks
        .input
        .map(|m| {
            ensure!(
                (m.height(), m.width()) == (h, w),
                Shape,
                "input mask is {}x{}, image is {}x{}",
                m.height(),
                m.width(),
                h,
                w
            );
            pad_mask(m, padded_input.height(), padded_input.width())
        })
        .transpose()
        .stage("input mask")?;

    let mask_loss = match (&padded_mask, masks.reference) {
        (Some(mc), Some(ms)) => {
            let ms = pad_mask(ms, padded_reference.height(), padded_reference.width())
                .stage("reference mask")?;
            let soft = warp_mask(&correlation, &ms, params.tau).stage("mask warp")?;
            let mc = mc.to_grid(correlation.content_grid()).stage("mask warp")?;
            Some(mask_warp_loss(&mc, &soft).stage("mask warp")?)
        }
        _ => None,
    };

    if let Some(regions) = &params.regions {
        let mask = padded_mask.as_ref().ok_or_else(|| Error::Stage {
            stage: "region transfer",
            source: Box::new(Error::Precondition(
                "region transfer needs an input mask".into(),
            )),
        })?;
        warped = region_transfer(&warped, &padded_input, mask, regions, params.feather)
            .stage("region transfer")?;
    }

    let encode = |img: &Image| encode(img, params.latent_downsample);
    let input_latent = encode(&padded_input).stage("encode")?;
    let reference_latent = encode(&warped).stage("encode")?;
    let content_cond =
        high_freq_conditioning_tensor(&input_latent).stage("structure conditioning")?;

    let encoder = params.style_encoder();
    let tokens_input = encoder
        .image_tokens(&extract_features(&padded_input, feature_cfg)?)
        .stage("style conditioning")?;
    let tokens_ref = encoder
        .image_tokens(&extract_features(&warped, feature_cfg)?)
        .stage("style conditioning")?;
    let tokens = interpolate_conditioning(&tokens_ref, &tokens_input, params.gamma)
        .stage("style conditioning")?;

    let schedule = params.schedule.build().stage("schedule")?;
    let denoiser = params.denoiser(padded_input.channels()).stage("denoiser")?;
    let neutral = Conditioning {
        content: Some(content_cond.clone()),
        style: Some(encoder.conditioning(tokens_input, params.lambda)),
    };
    let invert = |z: &Tensor| {
        ddim_invert(
            z,
            &denoiser,
            params.steps_inversion,
            &neutral,
            &schedule,
            params.inversion(),
        )
    };
    let input_noise = invert(&input_latent).stage("inversion")?;
    let reference_noise = invert(&reference_latent).stage("inversion")?;

    let blended = adain_wavelet_init(&input_noise, &reference_noise).stage("latent init")?;
    let initial =
        interpolate_strength(&blended, &input_noise, params.gamma).stage("latent init")?;

    let sampling = Conditioning {
        content: Some(content_cond),
        style: Some(encoder.conditioning(tokens, params.lambda)),
    };
    let z0 = ddim_sample(
        &initial,
        &denoiser,
        params.steps_sampling,
        &sampling,
        &schedule,
    )
    .stage("sampling")?;

    let output = decode(&z0, params.latent_downsample)
        .stage("decode")?
        .crop(h, w)
        .stage("decode")?;
    let similarity = similarity_query
        .map(|q| similarity_for(&correlation, q, params.stride, reference))
        .transpose()?;
    Ok(TransferOutput {
        output,
        warped_reference: warped.crop(h, w)?,
        correlation,
        similarity,
        inverted_input: input_noise,
        inverted_reference: reference_noise,
        initial_latent: initial,
        mask_loss,
    })
}

/// Image to latent: the planar pixels, optionally 2×2 box-averaged.
pub fn encode(image: &Image, downsample: bool) -> Result<Tensor> {
    let t = image.to_tensor();
    if !downsample {
        return Ok(t);
    }
    let (c, h, w) = t.dims3()?;
    ensure!(
        h % 2 == 0 && w % 2 == 0,
        Precondition,
        "downsampled encoding needs even dimensions"
    );
    let src = t.data();
    Tensor::from_fn([c, h / 2, w / 2], |i| {
        let (ci, rest) = (i / (h * w / 4), i % (h * w / 4));
        let (y, x) = (rest / (w / 2), rest % (w / 2));
        let p = ci * h * w + 2 * y * w + 2 * x;
        (src[p] + src[p + 1] + src[p + w] + src[p + w + 1]) * 0.25
    })
}

/// Latent to image, clamping into `[0, 1]`.
pub fn decode(latent: &Tensor, upsample: bool) -> Result<Image> {
    if upsample {
        Image::from_tensor_clamped(&upsample_bilinear2(latent)?)
    } else {
        Image::from_tensor_clamped(latent)
    }
}

fn unify_channels(a: &Image, b: &Image) -> Result<(Image, Image)> {
    let to_rgb = |img: &Image| {
        if img.channels() == 3 {
            Ok(img.clone())
        } else {
            Image::from_fn(img.height(), img.width(), 3, |y, x, _| img.get(y, x, 0))
        }
    };
    if a.channels() == b.channels() {
        Ok((a.clone(), b.clone()))
    } else {
        Ok((to_rgb(a)?, to_rgb(b)?))
    }
}

fn pad_to_multiple(img: &Image, multiple: usize) -> Result<Image> {
    let up = |n: usize| n.div_ceil(multiple) * multiple;
    img.pad_replicate(up(img.height()), up(img.width()))
}

fn pad_mask(m: &SemanticMask, height: usize, width: usize) -> Result<SemanticMask> {
    let mut labels = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            labels.push(m.label(y.min(m.height() - 1), x.min(m.width() - 1)));
        }
    }
    SemanticMask::new(height, width, m.num_classes(), labels)
}

/// Keeps `warped` where the input mask's label is in `regions` and takes
/// `input` elsewhere. A positive `feather` blends across region boundaries
/// with a linear ramp that many pixels wide.
pub fn region_transfer(
    warped: &Image,
    input: &Image,
    mask: &SemanticMask,
    regions: &[u32],
    feather: f32,
) -> Result<Image> {
    let (h, w, c) = (input.height(), input.width(), input.channels());
    ensure!(
        (warped.height(), warped.width(), warped.channels()) == (h, w, c),
        Shape,
        "warped {}x{}x{} vs input {}x{}x{}",
        warped.height(),
        warped.width(),
        warped.channels(),
        h,
        w,
        c
    );
    ensure!(
        (mask.height(), mask.width()) == (h, w),
        Shape,
        "mask {}x{} vs image {}x{}",
        mask.height(),
        mask.width(),
        h,
        w
    );
    if let Some(bad) = regions.iter().find(|&&r| r as usize >= mask.num_classes()) {
        return Err(Error::Precondition(format!(
            "unknown region label {} (mask has {} classes)",
            bad,
            mask.num_classes()
        )));
    }
    ensure!(
        feather >= 0.0 && feather.is_finite(),
        Precondition,
        "feather must be non-negative"
    );
    let keep: Vec<bool> = mask.labels().iter().map(|l| regions.contains(l)).collect();
    let weight = |y: usize, x: usize| -> f32 {
        let inside = keep[y * w + x];
        if feather == 0.0 {
            return if inside { 1.0 } else { 0.0 };
        }
        // distance to the nearest pixel on the other side, within reach of the ramp
        let reach = feather.ceil() as usize + 1;
        let mut best = f32::INFINITY;
        for yy in y.saturating_sub(reach)..(y + reach + 1).min(h) {
            for xx in x.saturating_sub(reach)..(x + reach + 1).min(w) {
                if keep[yy * w + xx] != inside {
                    let dy = yy as f32 - y as f32;
                    let dx = xx as f32 - x as f32;
                    best = best.min((dy * dy + dx * dx).sqrt());
                }
            }
        }
        let signed = if inside { best - 0.5 } else { 0.5 - best };
        (0.5 + signed / feather).clamp(0.0, 1.0)
    };
    Image::from_fn(h, w, c, |y, x, ch| {
        let k = weight(y, x);
        let (a, b) = (warped.get(y, x, ch), input.get(y, x, ch));
        if k == 1.0 {
            a
        } else if k == 0.0 {
            b
        } else {
            k * a + (1.0 - k) * b
        }
    })
}

/// Training objectives evaluated on one image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    /// Mask warping loss; needs both masks.
    pub mask: Option<f32>,
    /// Cyclic warping consistency on the reference's grid means.
    pub cyclic: f32,
    /// Noise prediction with image conditioning only.
    pub semantic: f32,
    /// Noise prediction with structure and style conditioning.
    pub reconstruction: f32,
    /// `semantic + lambda_c · cyclic + lambda_m · mask`; needs both masks.
    pub stage1_total: Option<f32>,
    pub timestep: usize,
}

/// Weights and timestep for [`evaluate_losses`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_c: f32,
    pub lambda_m: f32,
    pub timestep: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: DEFAULT_LAMBDA_C,
            lambda_m: DEFAULT_LAMBDA_M,
            timestep: 500,
        }
    }
}

/// Evaluates the correspondence and noise-prediction objectives with the
/// toy denoiser. Noise is drawn from `params.seed`.
pub fn evaluate_losses(
    input: &Image,
    reference: &Image,
    masks: Masks<'_>,
    params: &TransferParams,
    weights: LossWeights,
) -> Result<LossReport> {
    params.validate()?;
    let features = params.features();
    let a = align(
        input,
        reference,
        params.tau,
        params.pad_multiple(),
        features,
    )?;
    let corr = &a.correlation;

    let mask = match (masks.input, masks.reference) {
        (Some(mc), Some(ms)) => {
            let mc = pad_mask(mc, a.input.height(), a.input.width())?;
            let ms = pad_mask(ms, a.reference.height(), a.reference.width())?;
            let soft = warp_mask(corr, &ms, params.tau)?;
            Some(mask_warp_loss(&mc.to_grid(corr.content_grid())?, &soft)?)
        }
        _ => None,
    };

    let style_grid = pool_to_grid(&a.reference, corr.style_grid(), params.stride)?;
    let cyclic = cyclic_warp_loss(&style_grid, corr, params.tau, feature_l1_distance)?;

    let schedule = params.schedule.build()?;
    let z0 = encode(&a.input, params.latent_downsample)?;
    let eps = gaussian_like(&z0, params.seed);
    let z_t = forward_noise(&z0, weights.timestep, &eps, &schedule)?;
    let denoiser = params.denoiser(a.input.channels())?;
    let encoder = params.style_encoder();
    let tokens = encoder.image_tokens(&extract_features(&a.input, features)?)?;
    let style = encoder.conditioning(tokens, params.lambda);

    let semantic_cond = Conditioning {
        content: None,
        style: Some(style.clone()),
    };
    let semantic = noise_pred_loss(
        &eps,
        &denoiser.predict(&z_t, weights.timestep, &semantic_cond)?,
    )?;
    let full_cond = Conditioning {
        content: Some(high_freq_conditioning_tensor(&z0)?),
        style: Some(style),
    };
    let reconstruction =
        noise_pred_loss(&eps, &denoiser.predict(&z_t, weights.timestep, &full_cond)?)?;

    Ok(LossReport {
        mask,
        cyclic,
        semantic,
        reconstruction,
        stage1_total: mask
            .map(|m| stage1_total_loss(semantic, cyclic, m, weights.lambda_c, weights.lambda_m)),
        timestep: weights.timestep,
    })
}

/// Standard normal samples shaped like `like`, via Box–Muller.
fn gaussian_like(like: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut spare: Option<f32> = None;
    let shape = like.shape().to_vec();
    Tensor::from_fn(shape, |_| {
        if let Some(v) = spare.take() {
            return v;
        }
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        spare = Some((r * theta.sin()) as f32);
        (r * theta.cos()) as f32
    })
    .expect("shape of an existing tensor")
}
