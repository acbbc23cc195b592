mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgMatches, CommandFactory, FromArgMatches};
use portrait_style::correspondence::SemanticMask;
use portrait_style::features::FeatureConfig;
use portrait_style::io::{read_png, write_png};
use portrait_style::metrics::{content_distance, gram_loss};
use portrait_style::pipeline::{
    evaluate_losses, run_transfer, share_classes, similarity_for, warp_reference, LossWeights,
    Masks, TransferConfig, TransferParams, WrittenFiles,
};
use portrait_style::tensor::Image;
use rayon::prelude::*;
use serde_json::json;

use args::{
    merge_params, Cli, Command, EvaluateArgs, GridArgs, LossesArgs, PairArgs, SimilarityArgs,
    TransferArgs, WarpArgs,
};

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand is required");
    let result = match &cli.command {
        Command::Transfer(a) => transfer(a, sub),
        Command::WarpOnly(a) => warp_only(a),
        Command::Similarity(a) => similarity(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Losses(a) => losses(a, sub),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow!("missing required --{flag}"))
}

fn read_pair(pair: &PairArgs) -> Result<(Image, Image)> {
    let input = read_png(required(&pair.input, "input")?)?;
    let reference = read_png(required(&pair.reference, "reference")?)?;
    Ok((input, reference))
}

fn feature_config(grid: &GridArgs) -> Result<FeatureConfig> {
    let cfg = FeatureConfig {
        stride: grid.stride,
        scales: grid.scales,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Non-empty, non-comment lines split on whitespace.
fn list_entries(path: &Path) -> Result<Vec<Vec<PathBuf>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(PathBuf::from).collect())
        .collect())
}

fn transfer(args: &TransferArgs, matches: &ArgMatches) -> Result<()> {
    let file = args
        .config
        .as_deref()
        .map(TransferConfig::from_json_file)
        .transpose()?;
    let explicit = |id: &str| {
        file.is_none() || matches.value_source(id) == Some(clap::parser::ValueSource::CommandLine)
    };
    let base_params = file.as_ref().map(|c| c.params.clone()).unwrap_or_default();
    let mut params = merge_params(
        base_params,
        &args.grid,
        &args.model,
        matches,
        file.is_some(),
    );
    if explicit("feather") {
        params.feather = args.feather;
    }
    if args.regions.is_some() {
        params.regions = args.regions.clone();
    }

    let pick = |cli: &Option<PathBuf>, from_file: Option<&PathBuf>| {
        cli.clone().or_else(|| from_file.cloned())
    };
    let input_mask = pick(
        &args.input_mask,
        file.as_ref().and_then(|c| c.input_mask.as_ref()),
    );
    let reference_mask = pick(
        &args.reference_mask,
        file.as_ref().and_then(|c| c.reference_mask.as_ref()),
    );
    let query = args
        .query
        .or(file.as_ref().and_then(|c| c.similarity_query));

    let configs = match &args.pair_list {
        Some(list) => list_entries(list)?
            .into_iter()
            .enumerate()
            .map(|(i, cols)| {
                if !(3..=5).contains(&cols.len()) {
                    bail!(
                        "{} entry {}: expected `input reference out [input_mask [reference_mask]]`",
                        list.display(),
                        i + 1
                    );
                }
                Ok(TransferConfig {
                    input: cols[0].clone(),
                    reference: cols[1].clone(),
                    out: cols[2].clone(),
                    input_mask: cols.get(3).cloned().or_else(|| input_mask.clone()),
                    reference_mask: cols.get(4).cloned().or_else(|| reference_mask.clone()),
                    similarity_query: query,
                    params: params.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => {
            let from_file = |f: fn(&TransferConfig) -> &PathBuf| file.as_ref().map(f);
            let input = pick(&args.pair.input, from_file(|c| &c.input))
                .ok_or_else(|| anyhow!("missing required --input"))?;
            let reference = pick(&args.pair.reference, from_file(|c| &c.reference))
                .ok_or_else(|| anyhow!("missing required --reference"))?;
            let out = pick(&args.out, from_file(|c| &c.out))
                .ok_or_else(|| anyhow!("missing required --out"))?;
            vec![TransferConfig {
                input,
                reference,
                out,
                input_mask,
                reference_mask,
                similarity_query: query,
                params,
            }]
        }
    };

    let report = |written: WrittenFiles| {
        let mut line = json!({
            "output": written.output,
            "warped": written.warped_reference,
        });
        if let Some(sim) = written.similarity {
            line["similarity"] = json!(sim);
        }
        if let Some(loss) = written.mask_loss {
            line["l_mask"] = json!(loss);
        }
        println!("{line}");
    };
    if let [cfg] = configs.as_slice() {
        report(run_transfer(cfg)?);
        return Ok(());
    }

    let results: Vec<_> = configs
        .par_iter()
        .map(|cfg| run_transfer(cfg).with_context(|| format!("{}", cfg.input.display())))
        .collect();
    let mut failures = 0;
    for result in results {
        match result {
            Ok(written) => report(written),
            Err(e) => {
                failures += 1;
                eprintln!("error: {e:#}");
            }
        }
    }
    match failures {
        0 => Ok(()),
        n => bail!("{n} of {} transfers failed", configs.len()),
    }
}

fn warp_only(args: &WarpArgs) -> Result<()> {
    let cfg = feature_config(&args.grid)?;
    let (input, reference) = read_pair(&args.pair)?;
    let (warped, _) = warp_reference(&input, &reference, args.grid.tau, cfg)?;
    write_png(&warped, &args.out)?;
    println!("{}", json!({ "warped": args.out }));
    Ok(())
}

fn similarity(args: &SimilarityArgs) -> Result<()> {
    let cfg = feature_config(&args.grid)?;
    let (input, reference) = read_pair(&args.pair)?;
    let (_, corr) = warp_reference(&input, &reference, args.grid.tau, cfg)?;
    let map = similarity_for(&corr, args.query, cfg.stride, &reference)?;
    write_png(&map, &args.out)?;
    println!("{}", json!({ "similarity": args.out, "query": args.query }));
    Ok(())
}

fn evaluate_pair(a: &Path, b: &Path, cfg: FeatureConfig) -> Result<serde_json::Value> {
    let ia = read_png(a)?;
    let ib = read_png(b)?;
    let gram = gram_loss(&ia, &ib, cfg)?;
    let (h, w) = (ia.height().min(ib.height()), ia.width().min(ib.width()));
    let content = content_distance(&ia.crop(h, w)?, &ib.crop(h, w)?, cfg)?;
    Ok(json!({ "pair": [a, b], "gram": gram, "content": content }))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = FeatureConfig {
        stride: args.stride,
        scales: args.scales,
    };
    cfg.validate()?;
    let pairs = match &args.pair_list {
        Some(list) => list_entries(list)?
            .into_iter()
            .enumerate()
            .map(|(i, cols)| match <[PathBuf; 2]>::try_from(cols) {
                Ok([a, b]) => Ok((a, b)),
                Err(_) => bail!("{} entry {}: expected `a b`", list.display(), i + 1),
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![(
            required(&args.pair.input, "input")?.to_path_buf(),
            required(&args.pair.reference, "reference")?.to_path_buf(),
        )],
    };
    let lines: Vec<_> = pairs
        .par_iter()
        .map(|(a, b)| evaluate_pair(a, b, cfg))
        .collect::<Result<_>>()?;
    for line in lines {
        println!("{line}");
    }
    Ok(())
}

fn losses(args: &LossesArgs, matches: &ArgMatches) -> Result<()> {
    let params = merge_params(
        TransferParams::default(),
        &args.grid,
        &args.model,
        matches,
        false,
    );
    let (input, reference) = read_pair(&args.pair)?;
    let read_mask = |p: &Option<PathBuf>| {
        p.as_ref()
            .map(|p| SemanticMask::read_png(p, None))
            .transpose()
    };
    let (mc, ms) = share_classes(
        read_mask(&args.input_mask)?,
        read_mask(&args.reference_mask)?,
    )?;
    let report = evaluate_losses(
        &input,
        &reference,
        Masks {
            input: mc.as_ref(),
            reference: ms.as_ref(),
        },
        &params,
        LossWeights {
            lambda_c: args.lambda_c,
            lambda_m: args.lambda_m,
            timestep: args.timestep,
        },
    )?;
    println!(
        "{}",
        json!({
            "l_mask": report.mask,
            "l_cyc": report.cyclic,
            "l_sem": report.semantic,
            "l_rec": report.reconstruction,
            "total": report.stage1_total,
            "timestep": report.timestep,
        })
    );
    Ok(())
}
