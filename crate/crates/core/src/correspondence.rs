//! Dense correspondence between two feature grids and the warps built on it.
//!
//! The correlation between content position `i` and style position `j` is
//! the cosine similarity of the two feature vectors after each has been
//! centered by its own mean over channels. Warping replaces every content
//! position by a softmax-weighted average of style positions, with weights
//! `softmax_j(M(i, j) / tau)`.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::features::{extract_features_planar, FeatureConfig, FeatureMap};
use crate::io;
use crate::tensor::{Image, Tensor};

/// Default softmax temperature for warping.
pub const DEFAULT_TAU: f32 = 0.01;

/// Guard added to the correlation denominator.
pub const CORRELATION_EPS: f64 = 1e-8;

/// Pairwise correlations between a content grid (rows) and a style grid
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    content_grid: (usize, usize),
    style_grid: (usize, usize),
    data: Tensor,
}

impl CorrelationMatrix {
    /// Wraps an explicit `[rows, cols]` matrix. Entries must lie in
    /// `[-1 - 1e-5, 1 + 1e-5]`.
    pub fn from_tensor(
        data: Tensor,
        content_grid: (usize, usize),
        style_grid: (usize, usize),
    ) -> Result<Self> {
        let rows = content_grid.0 * content_grid.1;
        let cols = style_grid.0 * style_grid.1;
        ensure!(
            data.shape() == [rows, cols],
            Shape,
            "correlation for grids {:?} x {:?} must be [{}, {}], got {:?}",
            content_grid,
            style_grid,
            rows,
            cols,
            data.shape()
        );
        ensure!(
            data.data().iter().all(|v| v.abs() <= 1.0 + 1e-5),
            Precondition,
            "correlation entries must lie in [-1, 1]"
        );
        Ok(Self {
            content_grid,
            style_grid,
            data,
        })
    }

    /// Convenience for a `rows × cols` matrix on 1-row grids.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        ensure!(!rows.is_empty(), Shape, "empty correlation matrix");
        let cols = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            Shape,
            "ragged correlation rows"
        );
        let data = Tensor::new([rows.len(), cols], rows.concat())?;
        Self::from_tensor(data, (1, rows.len()), (1, cols))
    }

    pub fn rows(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn content_grid(&self) -> (usize, usize) {
        self.content_grid
    }

    pub fn style_grid(&self) -> (usize, usize) {
        self.style_grid
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let cols = self.cols();
        &self.data.data()[i * cols..(i + 1) * cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data.data()[i * self.cols() + j]
    }

    /// The matrix with content and style roles swapped.
    pub fn transposed(&self) -> Self {
        let (rows, cols) = (self.rows(), self.cols());
        let src = self.data.data();
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = src[i * cols + j];
            }
        }
        Self {
            content_grid: self.style_grid,
            style_grid: self.content_grid,
            data: Tensor::new([cols, rows], out).expect("same element count"),
        }
    }
}

/// Zero-mean normalized cross-correlation between every content and style
/// feature vector.
pub fn correlation_matrix(fc: &FeatureMap, fs: &FeatureMap) -> Result<CorrelationMatrix> {
    ensure!(
        fc.channels() == fs.channels(),
        Shape,
        "feature channels differ: {} vs {}",
        fc.channels(),
        fs.channels()
    );
    let centered = |f: &FeatureMap| -> Vec<(Vec<f64>, f64)> {
        (0..f.positions())
            .map(|i| {
                let v = f.vector(i);
                let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
                let c: Vec<f64> = v.iter().map(|&x| x as f64 - mean).collect();
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                (c, norm)
            })
            .collect()
    };
    let content = centered(fc);
    let style = centered(fs);
    let cols = style.len();
    let mut data = vec![0.0f32; content.len() * cols];
    data.par_chunks_mut(cols)
        .zip(content.par_iter())
        .for_each(|(row, (a, na))| {
            for (out, (b, nb)) in row.iter_mut().zip(&style) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                *out = (dot / (na * nb + CORRELATION_EPS)) as f32;
            }
        });
    CorrelationMatrix::from_tensor(
        Tensor::new([content.len(), cols], data)?,
        fc.grid(),
        fs.grid(),
    )
}

/// Softmax of `row / tau` with max subtraction.
pub fn softmax_row(row: &[f32], tau: f32) -> Vec<f64> {
    let tau = tau as f64;
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let mut w: Vec<f64> = row
        .iter()
        .map(|&v| ((v as f64 - max) / tau).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

fn check_tau(tau: f32) -> Result<()> {
    ensure!(
        tau > 0.0 && tau.is_finite(),
        Precondition,
        "tau must be positive, got {}",
        tau
    );
    Ok(())
}

/// The full `[rows, cols]` matrix of warping weights.
pub fn softmax_weights(corr: &CorrelationMatrix, tau: f32) -> Result<Tensor> {
    check_tau(tau)?;
    let data: Vec<f32> = (0..corr.rows())
        .into_par_iter()
        .flat_map_iter(|i| softmax_row(corr.row(i), tau).into_iter().map(|w| w as f32))
        .collect();
    Tensor::new([corr.rows(), corr.cols()], data)
}

/// Warps values living on the style grid onto the content grid.
///
/// `source` may be `[n]`, `[n, C]` or `[grid_h, grid_w, C]` with `n` the
/// number of style positions; the output keeps the same layout on the
/// content grid.
pub fn warp(corr: &CorrelationMatrix, source: &Tensor, tau: f32) -> Result<Tensor> {
    check_tau(tau)?;
    let cols = corr.cols();
    let (ch, out_shape) = match *source.shape() {
        [n] if n == cols => (1, vec![corr.rows()]),
        [n, c] if n == cols => (c, vec![corr.rows(), c]),
        [h, w, c] if (h, w) == corr.style_grid() => {
            let (gh, gw) = corr.content_grid();
            (c, vec![gh, gw, c])
        }
        _ => {
            return Err(Error::Shape(format!(
                "warp source {:?} does not match style grid {:?}",
                source.shape(),
                corr.style_grid()
            )))
        }
    };
    let src = source.data();
    let mut out = vec![0.0f32; corr.rows() * ch];
    out.par_chunks_mut(ch).enumerate().for_each(|(i, dst)| {
        let w = softmax_row(corr.row(i), tau);
        for (c, d) in dst.iter_mut().enumerate() {
            let acc: f64 = w
                .iter()
                .enumerate()
                .map(|(j, wj)| wj * src[j * ch + c] as f64)
                .sum();
            *d = acc as f32;
        }
    });
    Tensor::new(out_shape, out)
}

/// Warps a full-resolution style image onto the content grid.
///
/// The image must be exactly `stride` times the style grid in both axes.
/// Every output pixel takes the softmax row of the content cell containing
/// it, and blends the style pixels found at the same offset inside each
/// style cell.
pub fn warp_image(corr: &CorrelationMatrix, source: &Image, tau: f32) -> Result<Image> {
    check_tau(tau)?;
    let (sh, sw) = corr.style_grid();
    let stride = source.height() / sh;
    ensure!(
        stride >= 1 && source.height() == sh * stride && source.width() == sw * stride,
        Shape,
        "image {}x{} is not an integer multiple of style grid {}x{}",
        source.height(),
        source.width(),
        sh,
        sw
    );
    let (ch_, cw) = corr.content_grid();
    let chans = source.channels();
    let (out_h, out_w) = (ch_ * stride, cw * stride);
    let src = source.data();
    let row_len = out_w * chans;
    let mut out = vec![0.0f32; out_h * row_len];

    // One band of `stride` output rows per content grid row.
    out.par_chunks_mut(stride * row_len)
        .enumerate()
        .for_each(|(gy, band)| {
            let mut acc = vec![0.0f64; stride * stride * chans];
            for gx in 0..cw {
                let w = softmax_row(corr.row(gy * cw + gx), tau);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (j, &wj) in w.iter().enumerate() {
                    if wj == 0.0 {
                        continue;
                    }
                    let (sy, sx) = (j / sw, j % sw);
                    for dy in 0..stride {
                        let start = ((sy * stride + dy) * source.width() + sx * stride) * chans;
                        let patch_row = &src[start..start + stride * chans];
                        let acc_row = &mut acc[dy * stride * chans..(dy + 1) * stride * chans];
                        for (a, &v) in acc_row.iter_mut().zip(patch_row) {
                            *a += wj * v as f64;
                        }
                    }
                }
                for dy in 0..stride {
                    let start = dy * row_len + gx * stride * chans;
                    for (k, d) in band[start..start + stride * chans].iter_mut().enumerate() {
                        *d = (acc[dy * stride * chans + k] as f32).clamp(0.0, 1.0);
                    }
                }
            }
        });
    Image::new(out_h, out_w, chans, out)
}

/// Integer label map over `num_classes` semantic classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<u32>,
}

impl SemanticMask {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u32>) -> Result<Self> {
        ensure!(
            height > 0 && width > 0,
            Precondition,
            "mask dimensions must be positive"
        );
        ensure!(num_classes >= 1, Precondition, "need at least one class");
        ensure!(
            labels.len() == height * width,
            Shape,
            "{}x{} mask needs {} labels, got {}",
            height,
            width,
            height * width,
            labels.len()
        );
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Precondition(format!(
                "label {} out of range for {} classes",
                bad, num_classes
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    /// Reads a single-channel PNG whose pixel values are label indices.
    /// `num_classes` defaults to the largest label plus one.
    pub fn read_png(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let raw = io::read_png_raw(path)?;
        if raw.channels != 1 {
            return Err(Error::format(
                path,
                "label masks must be single-channel PNGs",
            ));
        }
        let labels: Vec<u32> = raw.samples.iter().map(|&s| s as u32).collect();
        let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |&m| m as usize + 1));
        Self::new(raw.height, raw.width, k, labels)
    }

    /// Writes the labels as an 8-bit gray PNG. Labels above 255 are rejected.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        ensure!(
            self.labels.iter().all(|&l| l <= 255),
            Precondition,
            "labels above 255 do not fit an 8-bit mask"
        );
        let bytes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        io::write_png_bytes(
            path.as_ref(),
            self.width,
            self.height,
            png::ColorType::Grayscale,
            &bytes,
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Same labels with a larger class count (for sharing K across masks).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        ensure!(
            num_classes >= self.num_classes,
            Precondition,
            "cannot shrink class count from {} to {}",
            self.num_classes,
            num_classes
        );
        self.num_classes = num_classes;
        Ok(self)
    }

    /// `[H·W, K]` one-hot encoding.
    pub fn one_hot(&self) -> Tensor {
        let k = self.num_classes;
        let mut data = vec![0.0; self.labels.len() * k];
        for (i, &l) in self.labels.iter().enumerate() {
            data[i * k + l as usize] = 1.0;
        }
        Tensor::new([self.labels.len(), k], data).expect("consistent one-hot shape")
    }

    /// Downsamples by `factor` with a per-cell majority vote; ties go to the
    /// smallest label. Border pixels beyond a whole cell are ignored.
    pub fn downsample_majority(&self, factor: usize) -> Result<Self> {
        ensure!(factor >= 1, Precondition, "factor must be positive");
        let (h, w) = (self.height / factor, self.width / factor);
        ensure!(
            h > 0 && w > 0,
            Precondition,
            "factor {} larger than mask {}x{}",
            factor,
            self.height,
            self.width
        );
        let mut counts = vec![0usize; self.num_classes];
        let mut labels = Vec::with_capacity(h * w);
        for gy in 0..h {
            for gx in 0..w {
                counts.iter_mut().for_each(|c| *c = 0);
                for y in gy * factor..(gy + 1) * factor {
                    for x in gx * factor..(gx + 1) * factor {
                        counts[self.label(y, x) as usize] += 1;
                    }
                }
                // max_by_key keeps the last maximum, so scan in reverse
                let best = (0..self.num_classes)
                    .rev()
                    .max_by_key(|&k| counts[k])
                    .unwrap_or(0);
                labels.push(best as u32);
            }
        }
        Self::new(h, w, self.num_classes, labels)
    }

    /// Brings the mask onto a `grid` by majority vote, inferring the
    /// integer factor.
    pub fn to_grid(&self, grid: (usize, usize)) -> Result<Self> {
        let factor = self.height / grid.0;
        ensure!(
            factor >= 1 && self.height == grid.0 * factor && self.width == grid.1 * factor,
            Shape,
            "mask {}x{} is not an integer multiple of grid {}x{}",
            self.height,
            self.width,
            grid.0,
            grid.1
        );
        self.downsample_majority(factor)
    }
}

/// Warps the style mask's one-hot encoding onto the content grid, giving a
/// `[rows, K]` soft mask.
pub fn warp_mask(corr: &CorrelationMatrix, mask: &SemanticMask, tau: f32) -> Result<Tensor> {
    let on_grid = mask.to_grid(corr.style_grid())?;
    warp(corr, &on_grid.one_hot(), tau)
}

/// Mean absolute difference between the content mask's one-hot encoding and
/// a warped soft mask, averaged over positions and classes.
pub fn mask_warp_loss(content_mask: &SemanticMask, warped_soft: &Tensor) -> Result<f32> {
    let one_hot = content_mask.one_hot();
    ensure!(
        one_hot.shape() == warped_soft.shape(),
        Shape,
        "content mask one-hot {:?} vs warped mask {:?}",
        one_hot.shape(),
        warped_soft.shape()
    );
    Ok(one_hot.mean_abs_diff(warped_soft))
}

/// Distance between a style tensor and its round trip through `corr` and
/// `corr`ᵀ, as measured by `distance`.
pub fn cyclic_warp_loss<D>(
    style: &Tensor,
    corr: &CorrelationMatrix,
    tau: f32,
    distance: D,
) -> Result<f32>
where
    D: Fn(&Tensor, &Tensor) -> Result<f32>,
{
    let forward = warp(corr, style, tau)?;
    let back = warp(&corr.transposed(), &forward, tau)?;
    distance(style, &back)
}

/// Default perceptual distance: mean L1 between single-pixel hand-crafted
/// features of two grid tensors (`[n]`, `[n, C]` or `[h, w, C]`).
pub fn feature_l1_distance(a: &Tensor, b: &Tensor) -> Result<f32> {
    ensure!(
        a.shape() == b.shape(),
        Shape,
        "{:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let config = FeatureConfig {
        stride: 1,
        scales: 1,
    };
    let fa = extract_features_planar(&grid_to_planar(a)?, config)?;
    let fb = extract_features_planar(&grid_to_planar(b)?, config)?;
    Ok(fa.tensor().mean_abs_diff(fb.tensor()))
}

/// `[n] | [n, C] | [h, w, C]` grid layout to planar `[C, h, w]`.
fn grid_to_planar(t: &Tensor) -> Result<Tensor> {
    let (h, w, c) = match *t.shape() {
        [n] => (1, n, 1),
        [n, c] => (1, n, c),
        [h, w, c] => (h, w, c),
        _ => return Err(Error::Shape(format!("not a grid tensor: {:?}", t.shape()))),
    };
    let src = t.data();
    Tensor::from_fn([c, h, w], |i| {
        let (ci, p) = (i / (h * w), i % (h * w));
        src[p * c + ci]
    })
}

/// Cell means of an image on a `grid` of `stride`-pixel cells, as
/// `[grid_h, grid_w, C]`.
pub fn pool_to_grid(image: &Image, grid: (usize, usize), stride: usize) -> Result<Tensor> {
    ensure!(
        stride >= 1 && grid.0 * stride <= image.height() && grid.1 * stride <= image.width(),
        Shape,
        "grid {:?} with stride {} exceeds image {}x{}",
        grid,
        stride,
        image.height(),
        image.width()
    );
    let ch = image.channels();
    let n = (stride * stride) as f64;
    let mut out = Vec::with_capacity(grid.0 * grid.1 * ch);
    for gy in 0..grid.0 {
        for gx in 0..grid.1 {
            for c in 0..ch {
                let mut sum = 0.0f64;
                for y in gy * stride..(gy + 1) * stride {
                    for x in gx * stride..(gx + 1) * stride {
                        sum += image.get(y, x, c) as f64;
                    }
                }
                out.push((sum / n) as f32);
            }
        }
    }
    Tensor::new([grid.0, grid.1, ch], out)
}

/// Heatmap of one content position's correlations over the style grid,
/// upsampled by `stride` and min-max normalized. A constant row maps to 0.5.
pub fn similarity_map(corr: &CorrelationMatrix, query: usize, stride: usize) -> Result<Image> {
    ensure!(
        query < corr.rows(),
        Precondition,
        "query {} out of range for {} content positions",
        query,
        corr.rows()
    );
    ensure!(stride >= 1, Precondition, "stride must be positive");
    let row = corr.row(query);
    let (min, max) = row
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = max - min;
    let (sh, sw) = corr.style_grid();
    Image::from_fn(sh * stride, sw * stride, 1, |y, x, _| {
        if span > 0.0 {
            (row[(y / stride) * sw + x / stride] - min) / span
        } else {
            0.5
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmap(rows: &[&[f32]]) -> FeatureMap {
        let c = rows[0].len();
        let data = Tensor::new([1, rows.len(), c], rows.concat()).unwrap();
        FeatureMap::from_tensor(data, FeatureConfig::default()).unwrap()
    }

    fn signed_identity(n: usize) -> CorrelationMatrix {
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { -1.0 }).collect())
            .collect();
        CorrelationMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_position_example() {
        let f = fmap(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let m = correlation_matrix(&f, &f).unwrap();
        let expected = [1.0, -1.0, -1.0, 1.0];
        for (a, b) in m.tensor().data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_vectors_correlate_to_zero() {
        let fc = fmap(&[&[3.0, 3.0, 3.0], &[1.0, 2.0, 4.0]]);
        let fs = fmap(&[&[0.0, 5.0, 1.0], &[2.0, 2.0, 2.0]]);
        let m = correlation_matrix(&fc, &fs).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0]);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let a = fmap(&[&[1.0, 0.0]]);
        let b = fmap(&[&[1.0, 0.0, 2.0]]);
        assert!(matches!(correlation_matrix(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn sharp_warp_selects_best_match() {
        let corr = signed_identity(2);
        let src = Tensor::new([2], vec![10.0, 20.0]).unwrap();
        let out = warp(&corr, &src, DEFAULT_TAU).unwrap();
        assert!((out.data()[0] - 10.0).abs() < 1e-4);
        assert!((out.data()[1] - 20.0).abs() < 1e-4);
    }

    #[test]
    fn uniform_rows_average_everything() {
        let corr = CorrelationMatrix::from_rows(&[vec![0.3; 4], vec![0.3; 4]]).unwrap();
        let src = Tensor::new([4, 2], vec![1.0, 0.0, 2.0, 0.0, 3.0, 4.0, 6.0, 8.0]).unwrap();
        let out = warp(&corr, &src, 0.01).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        for i in 0..2 {
            assert!((out.data()[i * 2] - 3.0).abs() < 1e-6);
            assert!((out.data()[i * 2 + 1] - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn warp_rejects_bad_tau_and_shapes() {
        let corr = signed_identity(2);
        let src = Tensor::new([2], vec![1.0, 2.0]).unwrap();
        assert!(warp(&corr, &src, 0.0).is_err());
        assert!(warp(&corr, &src, -1.0).is_err());
        assert!(warp(&corr, &Tensor::zeros([3]).unwrap(), 0.1).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let w = softmax_row(&[1.0, -1.0, 0.999], 1e-4);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_examples() {
        let corr = signed_identity(4);
        let mask = SemanticMask::new(1, 4, 3, vec![0, 2, 1, 2]).unwrap();
        let soft = warp_mask(&corr, &mask, DEFAULT_TAU).unwrap();
        assert!(soft.max_abs_diff(&mask.one_hot()) < 1e-4);
        assert!(mask_warp_loss(&mask, &soft).unwrap() < 1e-4);

        let single = SemanticMask::new(1, 4, 1, vec![0; 4]).unwrap();
        let rows = CorrelationMatrix::from_rows(&vec![vec![0.1, 0.9, -0.2, 0.4]; 4]).unwrap();
        let soft = warp_mask(&rows, &single, 0.5).unwrap();
        assert!(soft.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));

        let halves = SemanticMask::new(1, 4, 2, vec![0, 0, 1, 1]).unwrap();
        let uniform = CorrelationMatrix::from_rows(&vec![vec![0.5; 4]; 4]).unwrap();
        let soft = warp_mask(&uniform, &halves, DEFAULT_TAU).unwrap();
        assert!(soft.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn mask_loss_of_swapped_one_hot_is_one() {
        let mask = SemanticMask::new(1, 3, 2, vec![0, 0, 0]).unwrap();
        let swapped = Tensor::new([3, 2], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(mask_warp_loss(&mask, &swapped).unwrap(), 1.0);
        assert!(mask_warp_loss(&mask, &Tensor::zeros([2, 2]).unwrap()).is_err());
    }

    #[test]
    fn majority_vote_breaks_ties_low() {
        let mask = SemanticMask::new(2, 4, 4, vec![3, 1, 2, 2, 1, 3, 0, 1]).unwrap();
        let down = mask.downsample_majority(2).unwrap();
        // left cell: 3,1,1,3 tie -> 1; right cell: 2,2,0,1 -> 2
        assert_eq!(down.labels(), &[1, 2]);
    }

    #[test]
    fn mask_rejects_out_of_range_labels() {
        assert!(SemanticMask::new(1, 2, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn cyclic_loss_vanishes_for_permutations() {
        let corr = signed_identity(5);
        let style = Tensor::from_fn([1, 5, 3], |i| (i as f32 * 0.37).sin()).unwrap();
        let loss = cyclic_warp_loss(&style, &corr, DEFAULT_TAU, feature_l1_distance).unwrap();
        assert!(loss <= 1e-4, "{loss}");
        let zero = cyclic_warp_loss(&style, &corr, DEFAULT_TAU, |_, _| Ok(0.0)).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn similarity_map_examples() {
        let corr = CorrelationMatrix::from_tensor(
            Tensor::new([2, 4], vec![0.1, 0.9, -0.3, 0.2, 0.4, 0.4, 0.4, 0.4]).unwrap(),
            (1, 2),
            (2, 2),
        )
        .unwrap();
        let map = similarity_map(&corr, 0, 3).unwrap();
        assert_eq!((map.height(), map.width()), (6, 6));
        // argmax is style cell (0, 1) -> pixels x in 3..6, y in 0..3
        assert_eq!(map.get(1, 4, 0), 1.0);
        assert_eq!(map.get(4, 1, 0), 0.0);
        let flat = similarity_map(&corr, 1, 2).unwrap();
        assert!(flat.data().iter().all(|&v| v == 0.5));
        assert!(similarity_map(&corr, 2, 1).is_err());
    }

    #[test]
    fn image_warp_with_identity_copies_patches() {
        let corr = signed_identity(3);
        let corr = CorrelationMatrix::from_tensor(corr.tensor().clone(), (1, 3), (1, 3)).unwrap();
        let img = Image::from_fn(2, 6, 3, |y, x, c| ((y * 6 + x) * 3 + c) as f32 / 40.0).unwrap();
        let out = warp_image(&corr, &img, DEFAULT_TAU).unwrap();
        assert!(out.mean_abs_diff(&img) < 1e-4);
        let bad = Image::from_fn(3, 6, 3, |_, _, _| 0.0).unwrap();
        assert!(warp_image(&corr, &bad, DEFAULT_TAU).is_err());
    }

    #[test]
    fn pooling_to_grid() {
        let img =
            Image::from_fn(4, 4, 1, |y, x, _| if y < 2 && x < 2 { 1.0 } else { 0.0 }).unwrap();
        let t = pool_to_grid(&img, (2, 2), 2).unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0]);
    }
}
