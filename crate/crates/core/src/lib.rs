//! Exemplar-based portrait style transfer on a small, deterministic
//! latent-diffusion stand-in.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`tensor`] and [`io`]: dense tensors, images, PNG and `.npy` files.
//! - [`features`]: multi-scale hand-crafted descriptors on a patch grid.
//! - [`correspondence`]: cosine correlation, softmax warping, masks and the
//!   correspondence losses.
//! - [`wavelet`]: Haar transform and high-frequency conditioning.
//! - [`latent`]: AdaIN, the wavelet-blended initialization and strength
//!   interpolation.
//! - [`diffusion`]: noise schedule, DDIM sampling/inversion, decoupled
//!   cross-attention and a seeded toy denoiser.
//! - [`metrics`]: Gram and content distances.
//! - [`pipeline`]: the end-to-end transfer.
//!
//! ```
//! use portrait_style::pipeline::{transfer, Masks, TransferParams};
//! use portrait_style::tensor::Image;
//!
//! let input = Image::from_fn(32, 32, 3, |y, x, c| ((x + y + c) % 7) as f32 / 7.0)?;
//! let reference = Image::from_fn(32, 32, 3, |y, _, c| (y * (c + 1)) as f32 / 96.0)?;
//! let params = TransferParams { stride: 4, scales: 2, steps_sampling: 5, ..Default::default() };
//! let out = transfer(&input, &reference, Masks::default(), None, &params)?;
//! assert_eq!((out.output.height(), out.output.width()), (32, 32));
//! # Ok::<(), portrait_style::Error>(())
//! ```

pub mod correspondence;
pub mod diffusion;
mod error;
pub mod features;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result, StageExt};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors-and-files.md")]
    mod tensors_and_files {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/correspondence.md")]
    mod correspondence {}
    #[doc = include_str!("../../../book/src/wavelets.md")]
    mod wavelets {}
    #[doc = include_str!("../../../book/src/latent-ops.md")]
    mod latent_ops {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
