//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p portrait-style-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use portrait_style::correspondence::{
    correlation_matrix, cyclic_warp_loss, feature_l1_distance, mask_warp_loss, softmax_weights,
    warp, warp_image, warp_mask, CorrelationMatrix, SemanticMask, DEFAULT_TAU,
};
use portrait_style::diffusion::{
    cross_attention, ddim_invert, ddim_sample, ddim_step, decoupled_cross_attention, forward_noise,
    AttentionWeights, Conditioning, InversionOptions, LinearDenoiser, ScheduleConfig, ZeroDenoiser,
    DEFAULT_INVERSION_STEPS, DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_M, DEFAULT_SAMPLING_STEPS,
};
use portrait_style::features::{FeatureConfig, FeatureMap};
use portrait_style::io::read_png;
use portrait_style::latent::{adain, adain_wavelet_init, ChannelStats, DEFAULT_GAMMA};
use portrait_style::metrics::{gram_loss, gram_matrix};
use portrait_style::pipeline::{transfer, LossWeights, Masks, TransferParams};
use portrait_style::tensor::{Image, Tensor};
use portrait_style::wavelet::{dwt_haar, idwt_haar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], range: f32) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-range..range)).unwrap()
}

fn energy(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| (v as f64).powi(2)).sum()
}

fn wavelet_reconstruction() -> Outcome {
    let mut r = rng(1);
    let start = Instant::now();
    let (mut worst, mut worst_energy) = (0.0f32, 0.0f64);
    for _ in 0..100 {
        let x = random_tensor(&mut r, &[3, 64, 64], 1.0);
        let s = dwt_haar(&x).unwrap();
        worst = worst.max(idwt_haar(&s).unwrap().max_abs_diff(&x));
        let sub = energy(&s.ll) + energy(&s.lh) + energy(&s.hl) + energy(&s.hh);
        worst_energy = worst_energy.max((sub - energy(&x)).abs() / energy(&x));
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-5 && worst_energy <= 1e-4 && elapsed < Duration::from_secs(5),
        format!("max err {worst:.2e}, energy rel {worst_energy:.2e}, {elapsed:.2?}"),
    )
}

fn haar_ground_truth() -> Outcome {
    let c = 0.7f32;
    let s = dwt_haar(&Tensor::full([2, 6, 4], c).unwrap()).unwrap();
    let ll_err =
        s.ll.data()
            .iter()
            .map(|v| (v - 2.0 * c).abs())
            .fold(0.0, f32::max);
    let high = [&s.lh, &s.hl, &s.hh]
        .iter()
        .flat_map(|t| t.data())
        .map(|v| v.abs())
        .fold(0.0, f32::max);
    let (a, b, cc, d) = (1.0f32, 2.0, 3.0, 4.0);
    let block = dwt_haar(&Tensor::new([1, 2, 2], vec![a, b, cc, d]).unwrap()).unwrap();
    let expected = [
        (a + b + cc + d) / 2.0,
        (-a + b - cc + d) / 2.0,
        (-a - b + cc + d) / 2.0,
        (a - b - cc + d) / 2.0,
    ];
    let got = [
        block.ll.data()[0],
        block.lh.data()[0],
        block.hl.data()[0],
        block.hh.data()[0],
    ];
    let block_err = got
        .iter()
        .zip(&expected)
        .map(|(g, e)| (g - e).abs())
        .fold(0.0, f32::max);
    check(
        ll_err <= 1e-6 && high <= 1e-6 && block_err <= 1e-6,
        format!("LL err {ll_err:.1e}, high bands {high:.1e}, 2x2 block {got:?} vs {expected:?}"),
    )
}

fn feature_map(gh: usize, gw: usize, c: usize, data: Vec<f32>) -> FeatureMap {
    FeatureMap::from_tensor(
        Tensor::new([gh, gw, c], data).unwrap(),
        FeatureConfig::default(),
    )
    .unwrap()
}

fn brute_force_correlation(a: &[f32], b: &[f32]) -> f64 {
    let center = |v: &[f32]| {
        let m = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
        v.iter().map(|&x| x as f64 - m).collect::<Vec<_>>()
    };
    let (a, b) = (center(a), center(b));
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (norm(&a) * norm(&b) + 1e-8)
}

fn correlation_correctness() -> Outcome {
    let two = feature_map(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
    let m = correlation_matrix(&two, &two).unwrap();
    let hand = [1.0f32, -1.0, -1.0, 1.0];
    let hand_err = m
        .tensor()
        .data()
        .iter()
        .zip(&hand)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f32::max);

    let mut r = rng(3);
    let mut diag_ok = true;
    let (mut oracle_err, mut invariance_err) = (0.0f64, 0.0f32);
    for _ in 0..50 {
        // two centered channels are collinear, so every entry ties at +-1
        let (gh, gw, c) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(3..10));
        let fc = feature_map(
            gh,
            gw,
            c,
            (0..gh * gw * c).map(|_| r.gen_range(-2.0..2.0)).collect(),
        );
        let (sh, sw) = (r.gen_range(1..5), r.gen_range(1..5));
        let fs = feature_map(
            sh,
            sw,
            c,
            (0..sh * sw * c).map(|_| r.gen_range(-2.0..2.0)).collect(),
        );

        let self_corr = correlation_matrix(&fc, &fc).unwrap();
        for i in 0..fc.positions() {
            let row = self_corr.row(i);
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            diag_ok &= (row[i] - 1.0).abs() <= 1e-6 && row[i] >= max;
        }

        let m = correlation_matrix(&fc, &fs).unwrap();
        for i in 0..fc.positions() {
            for j in 0..fs.positions() {
                let e = brute_force_correlation(fc.vector(i), fs.vector(j));
                oracle_err = oracle_err.max((m.get(i, j) as f64 - e).abs());
            }
        }
        let scale = r.gen_range(0.1..10.0f32);
        let shifts: Vec<f32> = (0..gh * gw.max(sh * sw) * 4)
            .map(|_| r.gen_range(-3.0..3.0))
            .collect();
        let transform = |f: &FeatureMap| {
            let data = f
                .tensor()
                .data()
                .iter()
                .enumerate()
                .map(|(k, &v)| scale * v + shifts[k / c % shifts.len()])
                .collect();
            feature_map(f.grid_h(), f.grid_w(), c, data)
        };
        let moved = correlation_matrix(&transform(&fc), &transform(&fs)).unwrap();
        invariance_err = invariance_err.max(moved.tensor().max_abs_diff(m.tensor()));
    }
    check(
        hand_err <= 1e-6 && diag_ok && oracle_err <= 1e-5 && invariance_err <= 1e-5,
        format!(
            "2-position err {hand_err:.1e}, diagonal max {diag_ok}, oracle err {oracle_err:.1e}, \
             scale/shift err {invariance_err:.1e} over 50 cases"
        ),
    )
}

fn warping_convexity() -> Outcome {
    let mut r = rng(4);
    let mut violations = 0;
    let mut worst_sum = 0.0f32;
    for draw in 0..200 {
        let (gh, gw) = (r.gen_range(1..4), r.gen_range(1..4));
        let (sh, sw) = (r.gen_range(1..4), r.gen_range(1..4));
        let data = (0..gh * gw * sh * sw)
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let corr = CorrelationMatrix::from_tensor(
            Tensor::new([gh * gw, sh * sw], data).unwrap(),
            (gh, gw),
            (sh, sw),
        )
        .unwrap();
        let w = softmax_weights(&corr, DEFAULT_TAU).unwrap();
        for row in w.data().chunks(sh * sw) {
            worst_sum = worst_sum.max((row.iter().sum::<f32>() - 1.0).abs());
        }
        let c = r.gen_range(1..4);
        if draw % 2 == 0 {
            let src = random_tensor(&mut r, &[sh * sw, c], 5.0);
            let out = warp(&corr, &src, DEFAULT_TAU).unwrap();
            for ch in 0..c {
                let col: Vec<f32> = src.data().iter().skip(ch).step_by(c).copied().collect();
                let (lo, hi) = col
                    .iter()
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| {
                        (l.min(v), h.max(v))
                    });
                violations += out
                    .data()
                    .iter()
                    .skip(ch)
                    .step_by(c)
                    .filter(|&&v| v < lo - 1e-5 || v > hi + 1e-5)
                    .count();
            }
        } else {
            let stride = 4;
            let c = if c == 2 { 3 } else { c };
            let img = Image::from_fn(sh * stride, sw * stride, c, |_, _, _| r.gen_range(0.0..1.0))
                .unwrap();
            let out = warp_image(&corr, &img, DEFAULT_TAU).unwrap();
            for ch in 0..c {
                let vals = img.data().iter().skip(ch).step_by(c);
                let (lo, hi) = vals.fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| {
                    (l.min(v), h.max(v))
                });
                violations += out
                    .data()
                    .iter()
                    .skip(ch)
                    .step_by(c)
                    .filter(|&&v| v < lo - 1e-5 || v > hi + 1e-5)
                    .count();
            }
        }
    }
    check(
        violations == 0 && worst_sum <= 1e-5,
        format!("{violations} out-of-range values in 200 draws, worst row-sum err {worst_sum:.1e} at tau {DEFAULT_TAU}"),
    )
}

fn signed_permutation(perm: &[usize], grid: (usize, usize)) -> CorrelationMatrix {
    let n = perm.len();
    let data = (0..n * n)
        .map(|k| if perm[k / n] == k % n { 1.0 } else { -1.0 })
        .collect();
    CorrelationMatrix::from_tensor(Tensor::new([n, n], data).unwrap(), grid, grid).unwrap()
}

fn cyclic_consistency() -> Outcome {
    let mut r = rng(5);
    let mut worst_cyc = 0.0f32;
    for _ in 0..10 {
        let (h, w) = (r.gen_range(1..4), r.gen_range(2..4));
        let mut perm: Vec<usize> = (0..h * w).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let corr = signed_permutation(&perm, (h, w));
        let style = Tensor::from_fn([h, w, 3], |_| r.gen_range(0.0..1.0)).unwrap();
        worst_cyc = worst_cyc
            .max(cyclic_warp_loss(&style, &corr, DEFAULT_TAU, feature_l1_distance).unwrap());
    }
    let labels: Vec<u32> = (0..12).map(|_| r.gen_range(0..3)).collect();
    let mask = SemanticMask::new(3, 4, 3, labels).unwrap();
    let identity = signed_permutation(&(0..12).collect::<Vec<_>>(), (3, 4));
    let mask_loss =
        mask_warp_loss(&mask, &warp_mask(&identity, &mask, DEFAULT_TAU).unwrap()).unwrap();
    check(
        worst_cyc <= 1e-4 && mask_loss <= 1e-4,
        format!("cyclic loss {worst_cyc:.1e} on permutations, identity mask loss {mask_loss:.1e}"),
    )
}

fn adain_moments() -> Outcome {
    let mut r = rng(6);
    let (mut mean_err, mut std_rel, mut self_err) = (0.0f64, 0.0f64, 0.0f32);
    for _ in 0..100 {
        let c = r.gen_range(1..5);
        let (h, w) = (r.gen_range(2..12), r.gen_range(2..12));
        let content = random_tensor(&mut r, &[c, h, w], 3.0);
        let offset = r.gen_range(-2.0..2.0f32);
        let style = random_tensor(&mut r, &[c, h, w], 1.5).map(|v| v + offset);
        let out = adain(&content, &style).unwrap();
        let (got, want) = (
            ChannelStats::of(&out).unwrap(),
            ChannelStats::of(&style).unwrap(),
        );
        for k in 0..c {
            mean_err = mean_err.max((got.mean[k] - want.mean[k]).abs());
            std_rel = std_rel.max((got.std[k] - want.std[k]).abs() / want.std[k]);
        }
        self_err = self_err.max(adain(&content, &content).unwrap().max_abs_diff(&content));
    }
    check(
        mean_err <= 1e-5 && std_rel <= 1e-4 && self_err <= 1e-5,
        format!("mean err {mean_err:.1e}, std rel {std_rel:.1e}, adain(x,x) err {self_err:.1e} over 100 pairs"),
    )
}

fn wavelet_blend() -> Outcome {
    let mut r = rng(7);
    let mut worst = [0.0f32; 4];
    for _ in 0..50 {
        let (c, h, w) = (
            r.gen_range(1..5),
            2 * r.gen_range(1..9),
            2 * r.gen_range(1..9),
        );
        let input_latent = random_tensor(&mut r, &[c, h, w], 2.0);
        let reference_latent = random_tensor(&mut r, &[c, h, w], 2.0);
        let blend =
            dwt_haar(&adain_wavelet_init(&input_latent, &reference_latent).unwrap()).unwrap();
        let style = dwt_haar(&reference_latent).unwrap();
        let normalized = dwt_haar(&adain(&input_latent, &reference_latent).unwrap()).unwrap();
        let errs = [
            blend.ll.max_abs_diff(&style.ll),
            blend.lh.max_abs_diff(&normalized.lh),
            blend.hl.max_abs_diff(&normalized.hl),
            blend.hh.max_abs_diff(&normalized.hh),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    check(
        worst.iter().all(|&e| e <= 1e-4),
        format!(
            "LL vs reference {:.1e}; LH/HL/HH vs AdaIN {:.1e}/{:.1e}/{:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn ddim_round_trip() -> Outcome {
    let sched = ScheduleConfig::default().build().unwrap();
    let mut r = rng(8);
    let cond = Conditioning::default();
    let (mut zero_err, mut linear_err, mut exact_err) = (0.0f32, 0.0f32, 0.0f32);
    for _ in 0..10 {
        let z0 = random_tensor(&mut r, &[3, 8, 8], 1.0);
        let steps = r.gen_range(1..=50);
        let zt = ddim_invert(
            &z0,
            &ZeroDenoiser,
            steps,
            &cond,
            &sched,
            InversionOptions::default(),
        )
        .unwrap();
        zero_err = zero_err.max(
            ddim_sample(&zt, &ZeroDenoiser, steps, &cond, &sched)
                .unwrap()
                .max_abs_diff(&z0),
        );

        let den = LinearDenoiser { scale: 0.1 };
        let zt = ddim_invert(&z0, &den, 10, &cond, &sched, InversionOptions::default()).unwrap();
        linear_err = linear_err.max(
            ddim_sample(&zt, &den, 10, &cond, &sched)
                .unwrap()
                .max_abs_diff(&z0),
        );

        let eps = random_tensor(&mut r, &[3, 8, 8], 1.0);
        let t = r.gen_range(1..=1000);
        let noisy = forward_noise(&z0, t, &eps, &sched).unwrap();
        exact_err = exact_err.max(
            ddim_step(&noisy, &eps, t, 0, &sched)
                .unwrap()
                .max_abs_diff(&z0),
        );
    }
    check(
        zero_err <= 1e-4 && linear_err <= 1e-3 && exact_err <= 1e-5,
        format!("zero denoiser {zero_err:.1e}, linear 10-step {linear_err:.1e}, exact-noise step {exact_err:.1e}"),
    )
}

fn decoupled_attention() -> Outcome {
    let mut r = rng(9);
    let w = AttentionWeights::random(8, 6, 5, &mut r);
    let z = random_tensor(&mut r, &[10, 8], 1.0);
    let text = random_tensor(&mut r, &[4, 6], 1.0);
    let image = random_tensor(&mut r, &[17, 6], 1.0);
    let text_only = cross_attention(&z, &text, &w.w_q, &w.w_k_text, &w.w_v_text).unwrap();
    let bitwise = decoupled_cross_attention(&z, &text, &image, &w, 0.0).unwrap() == text_only;

    let one = AttentionWeights::identity(1);
    let t = |v| Tensor::new([1, 1], vec![v]).unwrap();
    let hand = decoupled_cross_attention(&t(1.0), &t(3.0), &t(5.0), &one, 1.0)
        .unwrap()
        .data()[0];

    let f0 = text_only;
    let f1 = decoupled_cross_attention(&z, &text, &image, &w, 1.0).unwrap();
    let mut affine_err = 0.0f32;
    for lambda in [0.25f32, 0.5, 0.75] {
        let fl = decoupled_cross_attention(&z, &text, &image, &w, lambda).unwrap();
        for ((&a, &b), &c) in f0.data().iter().zip(f1.data()).zip(fl.data()) {
            affine_err = affine_err.max((a + lambda * (b - a) - c).abs());
        }
    }
    check(
        bitwise && (hand - 8.0).abs() <= 1e-6 && affine_err <= 1e-6,
        format!("lambda=0 bitwise {bitwise}, single token {hand}, affine err {affine_err:.1e}"),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_portrait-style")
}

fn help_text(sub: &str) -> String {
    let out = Command::new(bin()).args([sub, "--help"]).output().unwrap();
    String::from_utf8(out.stdout).unwrap()
}

/// Finds the help entry for `flag` and returns its `[default: ..]` value.
fn help_default(help: &str, flag: &str) -> Option<String> {
    let start = help.find(&format!("{flag} <"))?;
    let rest = &help[start..];
    let end = rest[1..].find("\n      --").map_or(rest.len(), |e| e + 1);
    let entry = &rest[..end];
    let d = entry.find("[default: ")?;
    Some(entry[d + 10..].split(']').next()?.to_string())
}

fn gamma_endpoints() -> Outcome {
    let input = Image::from_fn(16, 16, 3, |y, x, c| {
        ((x * 5 + y * 3 + c * 7) % 11) as f32 / 10.0
    })
    .unwrap();
    let reference = Image::from_fn(16, 16, 3, |y, x, c| {
        ((x * 2 + y * 7 + c) % 13) as f32 / 12.0
    })
    .unwrap();
    let run = |gamma| {
        let params = TransferParams {
            gamma,
            stride: 4,
            scales: 2,
            steps_inversion: 3,
            steps_sampling: 3,
            ..Default::default()
        };
        transfer(&input, &reference, Masks::default(), None, &params).unwrap()
    };
    let zero = run(0.0);
    let at_zero = zero.initial_latent == zero.inverted_input;
    let one = run(1.0);
    let at_one = one.initial_latent
        == adain_wavelet_init(&one.inverted_input, &one.inverted_reference).unwrap();

    let p = TransferParams::default();
    let lw = LossWeights::default();
    let config_defaults = p.gamma == 1.0
        && DEFAULT_GAMMA == 1.0
        && p.steps_inversion == 10
        && p.steps_sampling == 30
        && DEFAULT_INVERSION_STEPS == 10
        && DEFAULT_SAMPLING_STEPS == 30
        && lw.lambda_c == 1.0
        && lw.lambda_m == 10.0
        && DEFAULT_LAMBDA_C == 1.0
        && DEFAULT_LAMBDA_M == 10.0;

    let th = help_text("transfer");
    let lh = help_text("losses");
    let expected = [
        (&th, "--gamma", "1.0"),
        (&th, "--steps-inv", "10"),
        (&th, "--steps-sample", "30"),
        (&lh, "--lambda-c", "1"),
        (&lh, "--lambda-m", "10"),
    ];
    let missing: Vec<_> = expected
        .iter()
        .filter(|(h, flag, v)| help_default(h, flag).as_deref() != Some(*v))
        .map(|(_, flag, _)| *flag)
        .collect();
    check(
        at_zero && at_one && config_defaults && missing.is_empty(),
        format!(
            "gamma=0 bitwise {at_zero}, gamma=1 bitwise {at_one}, config defaults {config_defaults}, \
             help defaults missing {missing:?}"
        ),
    )
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn run_transfer_cli(input: &Path, reference: &Path, out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(bin())
        .env("RAYON_NUM_THREADS", "1")
        .arg("transfer")
        .arg("--input")
        .arg(input)
        .arg("--reference")
        .arg(reference)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(start.elapsed())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (input, reference) = (assets().join("input.png"), assets().join("reference.png"));
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let t1 = run_transfer_cli(&input, &reference, &a)?;
    let t2 = run_transfer_cli(&input, &reference, &b)?;
    let same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap()
        && std::fs::read(dir.path().join("a.warped.png")).unwrap()
            == std::fs::read(dir.path().join("b.warped.png")).unwrap();
    let src = read_png(&input).unwrap();
    let out = read_png(&a).unwrap();
    let dims = (out.height(), out.width()) == (src.height(), src.width()) && src.height() == 128;

    let id = dir.path().join("id.png");
    run_transfer_cli(&input, &input, &id)?;
    let warped = read_png(dir.path().join("id.warped.png")).unwrap();
    let id_err = warped.mean_abs_diff(&src);
    let slowest = t1.max(t2);
    check(
        slowest < Duration::from_secs(30) && same && dims && id_err <= 0.02,
        format!(
            "slowest run {slowest:.2?} on 1 thread, bitwise repeat {same}, dims kept {dims}, \
             identity-pair warp mean-L1 {id_err:.4}"
        ),
    )
}

fn metrics_sanity() -> Outcome {
    let cfg = FeatureConfig {
        stride: 4,
        scales: 2,
    };
    let x = Image::from_fn(16, 16, 3, |y, x, c| ((x * y + c) % 9) as f32 / 8.0).unwrap();
    let self_loss = gram_loss(&x, &x, cfg).unwrap();

    let mut r = rng(12);
    let mut min_quad = f32::INFINITY;
    for _ in 0..100 {
        let (gh, gw, c) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..9));
        let f = feature_map(
            gh,
            gw,
            c,
            (0..gh * gw * c).map(|_| r.gen_range(-1.0..1.0)).collect(),
        );
        let g = gram_matrix(&f).unwrap();
        for _ in 0..10 {
            let v: Vec<f32> = (0..c).map(|_| r.gen_range(-1.0..1.0)).collect();
            let q = (0..c * c)
                .map(|k| v[k / c] * g.data()[k] * v[k % c])
                .sum::<f32>();
            min_quad = min_quad.min(q);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("pairs.txt");
    let (i, rf) = (assets().join("input.png"), assets().join("reference.png"));
    std::fs::write(
        &list,
        format!(
            "{} {}\n{} {}\n",
            i.display(),
            rf.display(),
            i.display(),
            i.display()
        ),
    )
    .unwrap();
    let out = Command::new(bin())
        .arg("evaluate")
        .arg("--pair-list")
        .arg(&list)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<_> = stdout.lines().collect();
    let valid = out.status.success()
        && lines.len() == 2
        && lines.iter().all(|l| {
            serde_json::from_str::<serde_json::Value>(l).is_ok_and(|v| {
                v["pair"].as_array().is_some_and(|p| p.len() == 2)
                    && v["gram"].as_f64().is_some_and(|g| g >= 0.0)
                    && v["content"].as_f64().is_some_and(|c| c >= 0.0)
            })
        });
    check(
        self_loss == 0.0 && min_quad >= -1e-6 && valid,
        format!("gram_loss(x,x) {self_loss}, min quadratic form {min_quad:.1e}, evaluate JSON lines valid {valid}"),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("wavelet perfect reconstruction", wavelet_reconstruction),
        ("Haar kernel ground truth", haar_ground_truth),
        ("correlation correctness", correlation_correctness),
        ("warping convexity", warping_convexity),
        ("cyclic consistency", cyclic_consistency),
        ("AdaIN moment matching", adain_moments),
        ("AdaIN-Wavelet blend", wavelet_blend),
        ("DDIM round trip", ddim_round_trip),
        ("decoupled cross-attention", decoupled_attention),
        ("strength endpoints and defaults", gamma_endpoints),
        ("end-to-end determinism and shape", end_to_end),
        ("metrics sanity", metrics_sanity),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", n + 1);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
