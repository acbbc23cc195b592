//! Deterministic DDIM (η = 0) sampling and inversion.
//!
//! Both directions use the same transition between two timesteps `a → b`
//! given a noise estimate `ε̂`:
//!
//! ```text
//! ẑ0      = (z_a − √(1 − ᾱ_a) · ε̂) / √ᾱ_a
//! z_b     = √ᾱ_b · ẑ0 + √(1 − ᾱ_b) · ε̂
//! ```
//!
//! For a fixed `ε̂` the map is affine and exactly invertible. Sampling
//! evaluates `ε̂` at the noisier end. Inversion has to guess `ε̂` at the end
//! it is moving toward: it starts from the estimate at the current latent
//! and then refines it by fixed-point iteration, so that sampling back with
//! the same step count retraces the trajectory.

use super::denoiser::{Conditioning, Denoiser};
use super::schedule::NoiseSchedule;
use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Inversion steps used by default.
pub const DEFAULT_INVERSION_STEPS: usize = 10;
/// Sampling steps used by default.
pub const DEFAULT_SAMPLING_STEPS: usize = 30;

/// Move `z` from timestep `from` to `to` with a fixed noise estimate.
fn transition(
    z: &Tensor,
    eps: &Tensor,
    from: usize,
    to: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    let (a_from, a_to) = (sched.alpha_bar(from), sched.alpha_bar(to));
    let (s_from, n_from) = (a_from.sqrt(), (1.0 - a_from).sqrt());
    let (s_to, n_to) = (a_to.sqrt(), (1.0 - a_to).sqrt());
    z.zip_map(eps, |zv, ev| {
        let x0 = (zv as f64 - n_from * ev as f64) / s_from;
        (s_to * x0 + n_to * ev as f64) as f32
    })
}

/// One deterministic DDIM step from `t` down to `t_prev`.
pub fn ddim_step(
    z_t: &Tensor,
    noise_estimate: &Tensor,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    sched.check_t(t)?;
    ensure!(
        t_prev < t,
        Precondition,
        "DDIM step must move to an earlier timestep, got {} -> {}",
        t,
        t_prev
    );
    transition(z_t, noise_estimate, t, t_prev, sched)
}

/// Runs `steps` DDIM steps from `T` down to 0.
pub fn ddim_sample<D: Denoiser + ?Sized>(
    noise_latent: &Tensor,
    denoiser: &D,
    steps: usize,
    cond: &Conditioning,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    let ts = sched.timesteps(steps)?;
    let mut z = noise_latent.clone();
    for pair in ts.windows(2).rev() {
        let (t_prev, t) = (pair[0], pair[1]);
        let eps = denoiser.predict(&z, t, cond)?;
        z = ddim_step(&z, &eps, t, t_prev, sched)?;
    }
    Ok(z)
}

/// Fixed-point refinement settings for [`ddim_invert`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    /// Extra denoiser evaluations per step after the initial estimate;
    /// 0 gives the plain one-evaluation inversion.
    pub refinements: usize,
    /// Stop refining once the latent moves less than this (max-abs).
    pub tolerance: f32,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            refinements: 6,
            tolerance: 1e-7,
        }
    }
}

/// Maps a clean latent to timestep `T` by running the DDIM recurrence
/// upward over the same timesteps [`ddim_sample`] would use.
pub fn ddim_invert<D: Denoiser + ?Sized>(
    z0: &Tensor,
    denoiser: &D,
    steps: usize,
    cond: &Conditioning,
    sched: &NoiseSchedule,
    options: InversionOptions,
) -> Result<Tensor> {
    let ts = sched.timesteps(steps)?;
    let mut z = z0.clone();
    for pair in ts.windows(2) {
        let (t, t_next) = (pair[0], pair[1]);
        let eps = denoiser.predict(&z, t_next, cond)?;
        let mut next = transition(&z, &eps, t, t_next, sched)?;
        for _ in 0..options.refinements {
            let eps = denoiser.predict(&next, t_next, cond)?;
            let refined = transition(&z, &eps, t, t_next, sched)?;
            let moved = refined.max_abs_diff(&next);
            next = refined;
            if moved <= options.tolerance {
                break;
            }
        }
        z = next;
    }
    Ok(z)
}
