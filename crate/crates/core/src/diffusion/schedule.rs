use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Linear-β schedule parameters. The defaults follow the usual latent
/// diffusion setup and are not load-bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            beta_start: 8.5e-4,
            beta_end: 0.012,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.train_steps, self.beta_start, self.beta_end)
    }
}

/// Cumulative signal rates `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

/// Linear β from `beta_start` to `beta_end` over `steps` steps, with
/// `ᾱ_t = Π_{s ≤ t} (1 − β_s)`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    ensure!(steps >= 1, Precondition, "schedule needs at least one step");
    ensure!(
        0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0,
        Precondition,
        "need 0 < beta_start <= beta_end < 1, got [{}, {}]",
        beta_start,
        beta_end
    );
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0f64;
    for s in 0..steps {
        let beta = if steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * s as f64 / (steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    ensure!(
        acc > 0.0,
        Precondition,
        "alpha_bar underflows to zero at T = {}",
        steps
    );
    Ok(NoiseSchedule { alpha_bar })
}

impl NoiseSchedule {
    /// `T`, the number of training steps.
    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    /// `ᾱ_t`. Panics if `t > T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `steps + 1` ascending timesteps `floor(k·T / steps)`, `k = 0..=steps`,
    /// from 0 up to and including `T`.
    pub fn timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let total = self.total_steps();
        ensure!(
            (1..=total).contains(&steps),
            Precondition,
            "step count must lie in [1, {}], got {}",
            total,
            steps
        );
        Ok((0..=steps).map(|k| k * total / steps).collect())
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        ensure!(
            t <= self.total_steps(),
            Precondition,
            "timestep {} outside [0, {}]",
            t,
            self.total_steps()
        );
        Ok(())
    }
}

/// `√ᾱ_t · z0 + √(1 − ᾱ_t) · eps`.
pub fn forward_noise(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    let a = sched.alpha_bar(t);
    let (signal, noise) = (a.sqrt(), (1.0 - a).sqrt());
    z0.zip_map(eps, |z, e| (signal * z as f64 + noise * e as f64) as f32)
}
