use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Parser, Subcommand};
use portrait_style::pipeline::TransferParams;

#[derive(Debug, Parser)]
#[command(
    name = "portrait-style",
    version,
    about = "Exemplar-based portrait style transfer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stylize the input portrait after the reference; also writes
    /// `<out>.warped.png` and, with --query, `<out>.sim.png`.
    Transfer(TransferArgs),
    /// Write only the reference warped onto the input's layout.
    WarpOnly(WarpArgs),
    /// Write the similarity heatmap of one input grid cell over the reference.
    Similarity(SimilarityArgs),
    /// Print Gram loss and content distance per pair as JSON lines.
    Evaluate(EvaluateArgs),
    /// Print the correspondence and noise-prediction losses as JSON.
    Losses(LossesArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Input (content) portrait, PNG.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Style reference portrait, PNG.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Feature grid cell size in pixels.
    #[arg(long, default_value = "8")]
    pub stride: usize,
    /// Number of feature pyramid levels.
    #[arg(long, default_value = "3")]
    pub scales: usize,
    /// Warping softmax temperature.
    #[arg(long, default_value = "0.01")]
    pub tau: f32,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Stylization strength in [0, 1].
    #[arg(long, default_value = "1.0")]
    pub gamma: f32,
    /// Weight of the image branch in decoupled cross-attention.
    #[arg(long, default_value = "1.0")]
    pub lambda: f32,
    /// Scale of the high-frequency structure conditioning.
    #[arg(long, default_value = "1.0")]
    pub cnt_scale: f32,
    /// DDIM inversion steps.
    #[arg(long, default_value = "10")]
    pub steps_inv: usize,
    /// DDIM sampling steps.
    #[arg(long, default_value = "30")]
    pub steps_sample: usize,
    /// Seed for the denoiser weights, style tokens and loss noise.
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Encode latents at half resolution.
    #[arg(long)]
    pub latent_downsample: bool,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Label PNG for the input; required with --regions.
    #[arg(long)]
    pub input_mask: Option<PathBuf>,
    /// Label PNG for the reference; enables the mask warping loss report.
    #[arg(long)]
    pub reference_mask: Option<PathBuf>,
    /// Comma-separated input-mask labels taken from the warped reference;
    /// all other pixels come from the input.
    #[arg(long, value_delimiter = ',')]
    pub regions: Option<Vec<u32>>,
    /// Width in pixels of the blend ramp at region boundaries.
    #[arg(long, default_value = "0")]
    pub feather: f32,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output PNG path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the similarity map of this input grid cell.
    #[arg(long)]
    pub query: Option<usize>,
    /// JSON config; flags given explicitly on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// File with one `input reference out [input_mask [reference_mask]]`
    /// per line, processed in parallel.
    #[arg(long, conflicts_with_all = ["input", "reference", "out"])]
    pub pair_list: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output PNG path.
    #[arg(long, default_value = "warped.png")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Row-major index of the input grid cell.
    #[arg(long)]
    pub query: usize,
    /// Output PNG path.
    #[arg(long, default_value = "similarity.sim.png")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// File with one `a b` image pair per line.
    #[arg(long, conflicts_with_all = ["input", "reference"])]
    pub pair_list: Option<PathBuf>,
    /// Feature grid cell size in pixels.
    #[arg(long, default_value = "8")]
    pub stride: usize,
    /// Number of feature pyramid levels.
    #[arg(long, default_value = "3")]
    pub scales: usize,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Label PNG for the input; needed for the mask loss.
    #[arg(long)]
    pub input_mask: Option<PathBuf>,
    /// Label PNG for the reference; needed for the mask loss.
    #[arg(long)]
    pub reference_mask: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Weight of the cyclic consistency loss in the stage-one total.
    #[arg(long, default_value = "1")]
    pub lambda_c: f32,
    /// Weight of the mask warping loss in the stage-one total.
    #[arg(long, default_value = "10")]
    pub lambda_m: f32,
    /// Diffusion timestep at which the noise-prediction losses are taken.
    #[arg(long, default_value = "500")]
    pub timestep: usize,
}

/// Merges command-line values into `base`. With `only_explicit`, flags left
/// at their defaults keep the value from `base`.
pub fn merge_params(
    base: TransferParams,
    grid: &GridArgs,
    model: &ModelArgs,
    matches: &ArgMatches,
    only_explicit: bool,
) -> TransferParams {
    let given =
        |id: &str| !only_explicit || matches.value_source(id) == Some(ValueSource::CommandLine);
    let mut p = base;
    macro_rules! apply {
        ($($id:literal => $field:ident = $value:expr),* $(,)?) => {
            $(if given($id) { p.$field = $value; })*
        };
    }
    apply! {
        "gamma" => gamma = model.gamma,
        "tau" => tau = grid.tau,
        "stride" => stride = grid.stride,
        "scales" => scales = grid.scales,
        "lambda" => lambda = model.lambda,
        "cnt_scale" => cnt_scale = model.cnt_scale,
        "steps_inv" => steps_inversion = model.steps_inv,
        "steps_sample" => steps_sampling = model.steps_sample,
        "seed" => seed = model.seed,
        "latent_downsample" => latent_downsample = model.latent_downsample,
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{CommandFactory, FromArgMatches};

    fn parse(argv: &[&str]) -> (TransferArgs, ArgMatches) {
        let matches = Cli::command().try_get_matches_from(argv).unwrap();
        let sub = matches.subcommand_matches("transfer").unwrap().clone();
        match Cli::from_arg_matches(&matches).unwrap().command {
            Command::Transfer(a) => (a, sub),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_flags_override_config_values() {
        let (a, m) = parse(&[
            "portrait-style",
            "transfer",
            "--gamma",
            "0.4",
            "--stride",
            "4",
        ]);
        let base = TransferParams {
            gamma: 0.9,
            scales: 2,
            steps_sampling: 7,
            ..Default::default()
        };
        let p = merge_params(base, &a.grid, &a.model, &m, true);
        assert_eq!(
            (p.gamma, p.stride, p.scales, p.steps_sampling),
            (0.4, 4, 2, 7)
        );
    }

    #[test]
    fn without_config_every_flag_applies() {
        let (a, m) = parse(&["portrait-style", "transfer"]);
        let base = TransferParams {
            gamma: 0.2,
            ..Default::default()
        };
        let p = merge_params(base, &a.grid, &a.model, &m, false);
        assert_eq!(p.gamma, 1.0);
        assert_eq!(p.steps_inversion, 10);
    }

    #[test]
    fn regions_split_on_commas() {
        let (a, _) = parse(&["portrait-style", "transfer", "--regions", "1,3,4"]);
        assert_eq!(a.regions, Some(vec![1, 3, 4]));
    }

    #[test]
    fn pair_list_conflicts_with_single_pair_flags() {
        let argv = [
            "portrait-style",
            "transfer",
            "--pair-list",
            "l.txt",
            "--input",
            "a.png",
        ];
        assert!(Cli::command().try_get_matches_from(argv).is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
