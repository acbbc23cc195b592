//! Dense `f32` tensors and images, the numeric carriers for everything else
//! in the crate.

use crate::error::{ensure, Result};

/// Maximum supported tensor rank.
pub const MAX_RANK: usize = 4;

/// A row-major `f32` array of rank at most 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        ensure!(
            data.len() == expected,
            Shape,
            "shape {:?} needs {} values, got {}",
            shape,
            expected,
            data.len()
        );
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    /// Builds a tensor by evaluating `f` on every flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> f32) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape,
            data: (0..n).map(f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Interprets the tensor as `[C, H, W]`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(crate::Error::Shape(format!(
                "expected a [C, H, W] tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        ensure!(
            self.shape == other.shape,
            Shape,
            "{:?} vs {:?}",
            self.shape,
            other.shape
        );
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Mean absolute elementwise difference. Panics on shape mismatch.
    pub fn mean_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(
            self.shape, other.shape,
            "mean_abs_diff on mismatched shapes"
        );
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        (sum / self.data.len().max(1) as f64) as f32
    }

    /// Euclidean norm of all elements.
    pub fn norm(&self) -> f32 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt() as f32
    }

    /// Concatenates `[C_i, H, W]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self> {
        ensure!(!parts.is_empty(), Shape, "nothing to concatenate");
        let (_, h, w) = parts[0].dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.dims3()?;
            ensure!(
                (ph, pw) == (h, w),
                Shape,
                "spatial dims {}x{} vs {}x{}",
                ph,
                pw,
                h,
                w
            );
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Self::new([channels, h, w], data)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    ensure!(
        shape.len() <= MAX_RANK,
        Shape,
        "rank {} exceeds the maximum of {}",
        shape.len(),
        MAX_RANK
    );
    ensure!(
        shape.iter().all(|&d| d > 0),
        Shape,
        "dimensions must be positive, got {:?}",
        shape
    );
    Ok(())
}

/// A gray or RGB image with values in `[0, 1]`, stored interleaved
/// (row-major, channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            channels == 1 || channels == 3,
            Precondition,
            "images have 1 or 3 channels, got {}",
            channels
        );
        ensure!(
            height > 0 && width > 0,
            Precondition,
            "image dimensions must be positive, got {}x{}",
            height,
            width
        );
        ensure!(
            data.len() == height * width * channels,
            Shape,
            "{}x{}x{} image needs {} values, got {}",
            height,
            width,
            channels,
            height * width * channels,
            data.len()
        );
        ensure!(
            data.iter().all(|v| (0.0..=1.0).contains(v)),
            Precondition,
            "image values must lie in [0, 1]"
        );
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image from `f(y, x, c)`, clamping into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(y, x, c)));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Planar `[C, H, W]` copy of the pixels.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, ch) = (self.height, self.width, self.channels);
        let mut data = vec![0.0; h * w * ch];
        for (i, px) in self.data.chunks_exact(ch).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * h * w + i] = v;
            }
        }
        Tensor {
            shape: vec![ch, h, w],
            data,
        }
    }

    /// Converts a `[C, H, W]` tensor (C = 1 or 3) to an image, clamping
    /// values into `[0, 1]`. Non-finite values map to 0.
    pub fn from_tensor_clamped(t: &Tensor) -> Result<Self> {
        let (ch, h, w) = t.dims3()?;
        let mut data = vec![0.0; h * w * ch];
        for c in 0..ch {
            for i in 0..h * w {
                data[i * ch + c] = clamp_unit(t.data[c * h * w + i]);
            }
        }
        Self::new(h, w, ch, data)
    }

    /// Replicate-pads on the bottom and right to `height` × `width`.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Result<Self> {
        ensure!(
            height >= self.height && width >= self.width,
            Precondition,
            "cannot pad {}x{} to smaller {}x{}",
            self.height,
            self.width,
            height,
            width
        );
        Self::from_fn(height, width, self.channels, |y, x, c| {
            self.get(y.min(self.height - 1), x.min(self.width - 1), c)
        })
    }

    /// Keeps the top-left `height` × `width` region.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        ensure!(
            height <= self.height && width <= self.width && height > 0 && width > 0,
            Precondition,
            "cannot crop {}x{} to {}x{}",
            self.height,
            self.width,
            height,
            width
        );
        Self::from_fn(height, width, self.channels, |y, x, c| self.get(y, x, c))
    }

    /// Mean absolute pixel difference. Panics if dimensions differ.
    pub fn mean_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!(
            (self.height, self.width, self.channels),
            (other.height, other.width, other.channels),
            "mean_abs_diff on mismatched images"
        );
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        (sum / self.data.len() as f64) as f32
    }
}

fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
