//! Noise schedule, DDIM sampling and inversion, decoupled cross-attention,
//! denoisers and the noise-prediction objectives.

mod attention;
mod ddim;
mod denoiser;
mod loss;
mod schedule;

pub use attention::{
    attention_probabilities, cross_attention, decoupled_cross_attention, AttentionWeights,
};
pub use ddim::{
    ddim_invert, ddim_sample, ddim_step, InversionOptions, DEFAULT_INVERSION_STEPS,
    DEFAULT_SAMPLING_STEPS,
};
pub use denoiser::{
    Conditioning, Denoiser, LinearDenoiser, StyleConditioning, StyleEncoder, ToyDenoiser,
    ToyDenoiserConfig, ZeroDenoiser,
};
pub use loss::{noise_pred_loss, stage1_total_loss, DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_M};
pub use schedule::{forward_noise, make_schedule, NoiseSchedule, ScheduleConfig};
