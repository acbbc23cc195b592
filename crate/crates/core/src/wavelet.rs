//! Single-level 2D Haar transform.
//!
//! With `L = [1, 1] / √2` and `H = [-1, 1] / √2`, the four 2×2 kernels are
//! outer products whose first factor runs down the rows and second factor
//! across the columns. For a block `[[a, b], [c, d]]`:
//!
//! | band | value                 | responds to          |
//! |------|-----------------------|----------------------|
//! | `ll` | `( a + b + c + d) / 2` | local average        |
//! | `lh` | `(-a + b - c + d) / 2` | horizontal change    |
//! | `hl` | `(-a - b + c + d) / 2` | vertical change      |
//! | `hh` | `( a - b - c + d) / 2` | diagonal change      |
//!
//! The transform is orthonormal, so [`idwt_haar`] inverts [`dwt_haar`]
//! exactly up to rounding.

use crate::error::{ensure, Result};
use crate::tensor::{Image, Tensor};

/// The four subbands of a `[C, H, W]` tensor, each `[C, H/2, W/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
}

impl SubbandSet {
    fn check(&self) -> Result<(usize, usize, usize)> {
        let dims = self.ll.dims3()?;
        for band in [&self.lh, &self.hl, &self.hh] {
            ensure!(
                band.shape() == self.ll.shape(),
                Shape,
                "subband shapes differ: {:?} vs {:?}",
                band.shape(),
                self.ll.shape()
            );
        }
        Ok(dims)
    }

    /// Stacks into `[4, C, H/2, W/2]` in the order ll, lh, hl, hh.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let (c, h, w) = self.check()?;
        let mut data = Vec::with_capacity(4 * c * h * w);
        for band in [&self.ll, &self.lh, &self.hl, &self.hh] {
            data.extend_from_slice(band.data());
        }
        Tensor::new([4, c, h, w], data)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [4, c, h, w] = *t.shape() else {
            return Err(crate::Error::Shape(format!(
                "stacked subbands must be [4, C, H, W], got {:?}",
                t.shape()
            )));
        };
        let n = c * h * w;
        let band = |k: usize| Tensor::new([c, h, w], t.data()[k * n..(k + 1) * n].to_vec());
        Ok(Self {
            ll: band(0)?,
            lh: band(1)?,
            hl: band(2)?,
            hh: band(3)?,
        })
    }
}

/// Forward Haar transform of a `[C, H, W]` tensor with even `H` and `W`.
pub fn dwt_haar(x: &Tensor) -> Result<SubbandSet> {
    let (c, h, w) = x.dims3()?;
    ensure!(
        h % 2 == 0 && w % 2 == 0,
        Precondition,
        "Haar transform needs even dimensions, got {}x{}",
        h,
        w
    );
    let (oh, ow) = (h / 2, w / 2);
    let n = c * oh * ow;
    let (mut ll, mut lh, mut hl, mut hh) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let src = x.data();
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for y in 0..oh {
            let top = &plane[2 * y * w..(2 * y + 1) * w];
            let bottom = &plane[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..ow {
                let (a, b) = (top[2 * x], top[2 * x + 1]);
                let (cc, d) = (bottom[2 * x], bottom[2 * x + 1]);
                ll.push((a + b + cc + d) * 0.5);
                lh.push((-a + b - cc + d) * 0.5);
                hl.push((-a - b + cc + d) * 0.5);
                hh.push((a - b - cc + d) * 0.5);
            }
        }
    }
    let shape = [c, oh, ow];
    Ok(SubbandSet {
        ll: Tensor::new(shape, ll)?,
        lh: Tensor::new(shape, lh)?,
        hl: Tensor::new(shape, hl)?,
        hh: Tensor::new(shape, hh)?,
    })
}

/// Inverse Haar transform.
pub fn idwt_haar(s: &SubbandSet) -> Result<Tensor> {
    let (c, h, w) = s.check()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; c * oh * ow];
    let (ll, lh, hl, hh) = (s.ll.data(), s.lh.data(), s.hl.data(), s.hh.data());
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let i = (ci * h + y) * w + x;
                let (p, q, r, t) = (ll[i], lh[i], hl[i], hh[i]);
                let base = ci * oh * ow + 2 * y * ow + 2 * x;
                out[base] = (p - q - r + t) * 0.5;
                out[base + 1] = (p + q - r - t) * 0.5;
                out[base + ow] = (p - q + r - t) * 0.5;
                out[base + ow + 1] = (p + q + r + t) * 0.5;
            }
        }
    }
    Tensor::new([c, oh, ow], out)
}

/// ×2 bilinear upsampling of a `[C, H, W]` tensor with half-pixel centers
/// (source coordinate `(dst + 0.5) / 2 - 0.5`, clamped at the borders).
pub fn upsample_bilinear2(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (2 * h, 2 * w);
    let taps = |dst: usize, n: usize| -> (usize, usize, f32) {
        let src = ((dst as f32 + 0.5) * 0.5 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f32)
    };
    let ys: Vec<_> = (0..oh).map(|y| taps(y, h)).collect();
    let xs: Vec<_> = (0..ow).map(|x| taps(x, w)).collect();
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let p = &src[ci * h * w..(ci + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bottom = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new([c, oh, ow], out)
}

/// Structure conditioning: the three high-pass subbands of a `[C, H, W]`
/// tensor concatenated as `[lh, hl, hh]` along channels and upsampled back
/// to `H × W`, giving `[3C, H, W]`.
pub fn high_freq_conditioning_tensor(x: &Tensor) -> Result<Tensor> {
    let bands = dwt_haar(x)?;
    let stacked = Tensor::concat_channels(&[&bands.lh, &bands.hl, &bands.hh])?;
    upsample_bilinear2(&stacked)
}

/// [`high_freq_conditioning_tensor`] applied to an image's planes.
pub fn high_freq_conditioning(content: &Image) -> Result<Tensor> {
    high_freq_conditioning_tensor(&content.to_tensor())
}
