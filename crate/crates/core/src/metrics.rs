//! Evaluation metrics on hand-crafted features.
//!
//! Values are only meaningful relative to each other on the same feature
//! configuration.

use crate::error::{ensure, Result};
use crate::features::{extract_features, FeatureConfig, FeatureMap};
use crate::tensor::{Image, Tensor};

/// `FᵀF / (H·W)` over flattened grid positions, `[C, C]`.
pub fn gram_matrix(f: &FeatureMap) -> Result<Tensor> {
    let n = f.positions();
    let c = f.channels();
    ensure!(n > 0 && c > 0, Precondition, "empty feature map");
    let mut g = vec![0.0f64; c * c];
    for i in 0..n {
        let v = f.vector(i);
        for a in 0..c {
            let va = v[a] as f64;
            for b in a..c {
                g[a * c + b] += va * v[b] as f64;
            }
        }
    }
    let mut out = vec![0.0f32; c * c];
    for a in 0..c {
        for b in a..c {
            let v = (g[a * c + b] / n as f64) as f32;
            out[a * c + b] = v;
            out[b * c + a] = v;
        }
    }
    Tensor::new([c, c], out)
}

/// Mean squared difference of the two images' Gram matrices.
pub fn gram_loss(a: &Image, b: &Image, config: FeatureConfig) -> Result<f32> {
    let ga = gram_matrix(&extract_features(a, config)?)?;
    let gb = gram_matrix(&extract_features(b, config)?)?;
    ensure!(
        ga.shape() == gb.shape(),
        Shape,
        "images have different channel counts"
    );
    let sum: f64 = ga
        .data()
        .iter()
        .zip(gb.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok((sum / ga.len() as f64) as f32)
}

/// Mean L1 distance between the two images' multi-scale features. The
/// images must produce the same feature grid.
pub fn content_distance(a: &Image, b: &Image, config: FeatureConfig) -> Result<f32> {
    let fa = extract_features(a, config)?;
    let fb = extract_features(b, config)?;
    ensure!(
        fa.tensor().shape() == fb.tensor().shape(),
        Shape,
        "feature maps differ: {:?} vs {:?}",
        fa.tensor().shape(),
        fb.tensor().shape()
    );
    Ok(fa.tensor().mean_abs_diff(fb.tensor()))
}
