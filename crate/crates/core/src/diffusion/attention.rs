//! Decoupled cross-attention: a text branch and an image branch attend from
//! the same queries and are summed, the image branch scaled by `λ`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Projection matrices for [`decoupled_cross_attention`].
///
/// Queries are `[N, model_dim]` and context tokens `[M, token_dim]`:
/// `w_q: [model_dim, key_dim]`, `w_k_*: [token_dim, key_dim]`,
/// `w_v_*: [token_dim, model_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub w_q: Tensor,
    pub w_k_text: Tensor,
    pub w_v_text: Tensor,
    pub w_k_image: Tensor,
    pub w_v_image: Tensor,
}

impl AttentionWeights {
    /// Uniform `±1/√fan_in` initialization drawn from `rng`.
    pub fn random(
        model_dim: usize,
        token_dim: usize,
        key_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w_q: random_matrix(model_dim, key_dim, rng),
            w_k_text: random_matrix(token_dim, key_dim, rng),
            w_v_text: random_matrix(token_dim, model_dim, rng),
            w_k_image: random_matrix(token_dim, key_dim, rng),
            w_v_image: random_matrix(token_dim, model_dim, rng),
        }
    }

    /// All five projections set to the `dim × dim` identity.
    pub fn identity(dim: usize) -> Self {
        let eye = Tensor::from_fn([dim, dim], |i| if i / dim == i % dim { 1.0 } else { 0.0 })
            .expect("positive dim");
        Self {
            w_q: eye.clone(),
            w_k_text: eye.clone(),
            w_v_text: eye.clone(),
            w_k_image: eye.clone(),
            w_v_image: eye,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn token_dim(&self) -> usize {
        self.w_k_text.shape()[0]
    }
}

pub(crate) fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (rows as f32).sqrt();
    Tensor::from_fn([rows, cols], |_| rng.gen_range(-bound..bound)).expect("positive dims")
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Shape(format!(
            "{what} must be a matrix, got {:?}",
            t.shape()
        ))),
    }
}

/// `a · b` for `[n, k] × [k, m]`.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = dims2(a, "left operand")?;
    let (k2, m) = dims2(b, "right operand")?;
    ensure!(k == k2, Shape, "matmul inner dims {} vs {}", k, k2);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; n * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (p, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in row.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    });
    Tensor::new([n, m], out)
}

/// Row softmax of `q kᵀ / √d_k`, shape `[N, M]`.
pub fn attention_probabilities(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let (n, dk) = dims2(q, "queries")?;
    let (m, dk2) = dims2(k, "keys")?;
    ensure!(dk == dk2, Shape, "query/key widths {} vs {}", dk, dk2);
    let scale = 1.0 / (dk as f32).sqrt();
    let (qd, kd) = (q.data(), k.data());
    let mut out = vec![0.0f32; n * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let qi = &qd[i * dk..(i + 1) * dk];
        for (j, r) in row.iter_mut().enumerate() {
            *r = qi
                .iter()
                .zip(&kd[j * dk..(j + 1) * dk])
                .map(|(a, b)| a * b)
                .sum::<f32>()
                * scale;
        }
        let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
    });
    Tensor::new([n, m], out)
}

/// Single-branch cross-attention `softmax(Z W_q (C W_k)ᵀ / √d_k) · C W_v`.
pub fn cross_attention(
    z: &Tensor,
    context: &Tensor,
    w_q: &Tensor,
    w_k: &Tensor,
    w_v: &Tensor,
) -> Result<Tensor> {
    let q = matmul(z, w_q)?;
    let k = matmul(context, w_k)?;
    let v = matmul(context, w_v)?;
    matmul(&attention_probabilities(&q, &k)?, &v)
}

/// Text-branch attention plus `lambda` times image-branch attention.
/// With `lambda == 0` the image branch is skipped and the result is exactly
/// the text branch.
pub fn decoupled_cross_attention(
    z: &Tensor,
    text: &Tensor,
    image: &Tensor,
    weights: &AttentionWeights,
    lambda: f32,
) -> Result<Tensor> {
    ensure!(
        lambda >= 0.0 && lambda.is_finite(),
        Precondition,
        "lambda must be non-negative, got {}",
        lambda
    );
    let (_, d) = dims2(z, "queries")?;
    ensure!(
        d == weights.model_dim(),
        Shape,
        "query width {} vs projection {}",
        d,
        weights.model_dim()
    );
    let text_out = cross_attention(z, text, &weights.w_q, &weights.w_k_text, &weights.w_v_text)?;
    if lambda == 0.0 {
        return Ok(text_out);
    }
    let image_out = cross_attention(
        z,
        image,
        &weights.w_q,
        &weights.w_k_image,
        &weights.w_v_image,
    )?;
    text_out.zip_map(&image_out, |t, i| t + lambda * i)
}
