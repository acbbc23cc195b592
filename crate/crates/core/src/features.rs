//! Deterministic hand-crafted feature extractor.
//!
//! Each grid cell of `stride × stride` pixels is described, at every pyramid
//! level, by the mean of each channel, the mean absolute horizontal and
//! vertical forward difference of luma, and the standard deviation of each
//! channel. Level `s` is the image box-downsampled by `2^s`, on which a cell
//! spans `stride / 2^s` pixels. No positional information is encoded, so
//! matching is driven purely by local appearance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io;
use crate::tensor::{Image, Tensor};

/// Luma weights applied to RGB planes.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Grid and pyramid settings for [`extract_features`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub stride: usize,
    pub scales: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stride: 8,
            scales: 3,
        }
    }
}

impl FeatureConfig {
    /// Feature channels produced for an input with `channels` planes.
    pub fn channels_for(&self, channels: usize) -> usize {
        self.scales * (2 * channels + 2)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.stride >= 1, Precondition, "stride must be positive");
        ensure!(self.scales >= 1, Precondition, "scales must be positive");
        ensure!(
            self.scales <= usize::BITS as usize
                && self.stride.is_multiple_of(1usize << (self.scales - 1)),
            Precondition,
            "stride {} must be divisible by 2^(scales - 1) = {}",
            self.stride,
            1usize << (self.scales - 1).min(63)
        );
        Ok(())
    }
}

/// Per-cell feature vectors on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    config: FeatureConfig,
    data: Tensor,
}

impl FeatureMap {
    /// Wraps a `[grid_h, grid_w, C]` tensor.
    pub fn from_tensor(data: Tensor, config: FeatureConfig) -> Result<Self> {
        let [grid_h, grid_w, channels] = *data.shape() else {
            return Err(Error::Shape(format!(
                "feature maps are [grid_h, grid_w, C], got {:?}",
                data.shape()
            )));
        };
        Ok(Self {
            grid_h,
            grid_w,
            channels,
            config,
            data,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    /// Number of grid positions.
    pub fn positions(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> usize {
        self.config.stride
    }

    pub fn config(&self) -> FeatureConfig {
        self.config
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    /// Feature vector at flat position `i = row * grid_w + col`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data.data()[i * self.channels..(i + 1) * self.channels]
    }

    /// Writes the features as NPY plus a `{ "stride", "scales" }` JSON
    /// sidecar next to it (same stem, `.json` extension).
    pub fn save(&self, npy_path: impl AsRef<Path>) -> Result<()> {
        let npy_path = npy_path.as_ref();
        io::write_npy(&self.data, npy_path)?;
        let sidecar = sidecar_path(npy_path);
        let json = serde_json::to_string(&self.config).expect("config serializes");
        std::fs::write(&sidecar, json).map_err(|e| Error::io(sidecar, e))
    }

    pub fn load(npy_path: impl AsRef<Path>) -> Result<Self> {
        let npy_path = npy_path.as_ref();
        let data = io::read_npy(npy_path)?;
        let sidecar = sidecar_path(npy_path);
        let json = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let config: FeatureConfig =
            serde_json::from_str(&json).map_err(|e| Error::format(&sidecar, e.to_string()))?;
        Self::from_tensor(data, config)
    }
}

fn sidecar_path(npy_path: &Path) -> PathBuf {
    npy_path.with_extension("json")
}

/// Extracts features from an image.
pub fn extract_features(image: &Image, config: FeatureConfig) -> Result<FeatureMap> {
    extract_features_planar(&image.to_tensor(), config)
}

/// Extracts features from a planar `[C, H, W]` tensor with any channel
/// count and unbounded values. Luma is the weighted RGB sum for three
/// channels and the channel average otherwise.
pub fn extract_features_planar(planes: &Tensor, config: FeatureConfig) -> Result<FeatureMap> {
    config.validate()?;
    let (ch, h, w) = planes.dims3()?;
    let stride = config.stride;
    ensure!(
        stride <= h && stride <= w,
        Precondition,
        "stride {} larger than image {}x{}",
        stride,
        h,
        w
    );
    let (gh, gw) = (h / stride, w / stride);
    let per_scale = 2 * ch + 2;
    let c_out = config.scales * per_scale;

    let mut level = Plane::crop(planes, gh * stride, gw * stride);
    let mut out = vec![0.0f32; gh * gw * c_out];
    for s in 0..config.scales {
        if s > 0 {
            level = level.downsample2();
        }
        let cell = stride >> s;
        let luma = level.luma();
        let (grad_x, grad_y) = forward_differences(&luma, level.h, level.w);
        let n = (cell * cell) as f64;
        for gy in 0..gh {
            for gx in 0..gw {
                let base = (gy * gw + gx) * c_out + s * per_scale;
                let rows = gy * cell..(gy + 1) * cell;
                let cols = gx * cell..(gx + 1) * cell;
                for c in 0..ch {
                    let plane = &level.data[c * level.h * level.w..(c + 1) * level.h * level.w];
                    let (mut sum, mut sq) = (0.0f64, 0.0f64);
                    for y in rows.clone() {
                        for &v in &plane[y * level.w + cols.start..y * level.w + cols.end] {
                            sum += v;
                            sq += v * v;
                        }
                    }
                    let mean = sum / n;
                    out[base + c] = mean as f32;
                    out[base + ch + 2 + c] = (sq / n - mean * mean).max(0.0).sqrt() as f32;
                }
                let (mut ax, mut ay) = (0.0f64, 0.0f64);
                for y in rows.clone() {
                    for x in cols.clone() {
                        ax += grad_x[y * level.w + x].abs();
                        ay += grad_y[y * level.w + x].abs();
                    }
                }
                out[base + ch] = (ax / n) as f32;
                out[base + ch + 1] = (ay / n) as f32;
            }
        }
    }
    FeatureMap::from_tensor(Tensor::new([gh, gw, c_out], out)?, config)
}

/// Planar f64 working copy of an image level.
struct Plane {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn crop(t: &Tensor, h: usize, w: usize) -> Self {
        let (c, th, tw) = t.dims3().expect("caller checked rank");
        debug_assert!(h <= th && w <= tw);
        let src = t.data();
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                let row = ci * th * tw + y * tw;
                data.extend(src[row..row + w].iter().map(|&v| v as f64));
            }
        }
        Self { c, h, w, data }
    }

    /// 2×2 box average; dims are even by construction.
    fn downsample2(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = Vec::with_capacity(self.c * h * w);
        for ci in 0..self.c {
            let p = &self.data[ci * self.h * self.w..];
            for y in 0..h {
                for x in 0..w {
                    let i = 2 * y * self.w + 2 * x;
                    data.push((p[i] + p[i + 1] + p[i + self.w] + p[i + self.w + 1]) * 0.25);
                }
            }
        }
        Self {
            c: self.c,
            h,
            w,
            data,
        }
    }

    fn luma(&self) -> Vec<f64> {
        let n = self.h * self.w;
        let mut out = vec![0.0; n];
        let weights = if self.c == 3 {
            LUMA.to_vec()
        } else {
            vec![1.0 / self.c as f64; self.c]
        };
        for (plane, weight) in self.data.chunks(n).zip(weights) {
            for (o, &v) in out.iter_mut().zip(plane) {
                *o += weight * v;
            }
        }
        out
    }
}

/// Forward differences with the last row/column replicated (zero gradient).
fn forward_differences(p: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = p[y * w + (x + 1).min(w - 1)] - p[i];
            gy[i] = p[(y + 1).min(h - 1) * w + x] - p[i];
        }
    }
    (gx, gy)
}
