//! Training objectives, evaluable on given inputs.

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Default weight of the cyclic warping term.
pub const DEFAULT_LAMBDA_C: f32 = 1.0;
/// Default weight of the mask warping term.
pub const DEFAULT_LAMBDA_M: f32 = 10.0;

/// Mean squared error between true and predicted noise.
pub fn noise_pred_loss(eps: &Tensor, predicted: &Tensor) -> Result<f32> {
    ensure!(
        eps.shape() == predicted.shape(),
        Shape,
        "{:?} vs {:?}",
        eps.shape(),
        predicted.shape()
    );
    let sum: f64 = eps
        .data()
        .iter()
        .zip(predicted.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok((sum / eps.len() as f64) as f32)
}

/// `l_sem + lambda_c · l_cyc + lambda_m · l_mask`.
pub fn stage1_total_loss(l_sem: f32, l_cyc: f32, l_mask: f32, lambda_c: f32, lambda_m: f32) -> f32 {
    l_sem + lambda_c * l_cyc + lambda_m * l_mask
}
