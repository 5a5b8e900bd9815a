//! Acceptance gate: one test per release criterion, each printing a single
//! pass/fail line (visible with --nocapture). The thresholds are fixed;
//! a red criterion here is a blocker, not a flake.

use std::process::Command;
use std::time::{Duration, Instant};

use dmnet_cli::bridge::{rand_tensor, to_arr};
use dmnet_cli::pngio::save_png;
use dmnet_cli::selfcheck;
use dmnet_core::checkpoint;
use dmnet_core::metrics::{bicubic_resize, evaluate_pair, psnr, rgb_to_y, ssim};
use dmnet_core::model::{macs_per_forward, upscale, FreqDomain, ModelConfig};
use dmnet_core::params::BoundParams;
use dmnet_core::rng::SeededRng;
use dmnet_core::tape::Tape;
use dmnet_core::training::{
    train_loop, AdamState, FreqLoss, PairedData, SilentSink, TrainConfig,
};
use dmnet_core::{blocks, fourier, training, wavelet, Shape, Tensor};
use dmnet_oracle as oracle;

fn verdict(n: usize, ok: bool, detail: &str) {
    println!("criterion {n}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------- 1 ----

#[test]
fn criterion_1_wavelet_exactness() {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xACC1);
    let mut worst_abs = 0.0f64;
    let mut worst_energy = 0.0f64;
    for _ in 0..100 {
        let shape = Shape::new(
            1 + rng.below(2),
            1 + rng.below(8),
            2 * (1 + rng.below(32)),
            2 * (1 + rng.below(32)),
        );
        let x = rand_tensor(shape, &mut rng, -1.0, 1.0);
        let stack = wavelet::dwt_stack(&x).unwrap();
        let ex: f64 = x.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let es: f64 = stack.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        worst_energy = worst_energy.max((es - ex).abs() / ex.max(1e-12));
        let back = wavelet::idwt_stack(&stack).unwrap();
        let diff = back
            .data()
            .iter()
            .zip(x.data())
            .map(|(&a, &b)| (a - b).abs() as f64)
            .fold(0.0f64, f64::max);
        worst_abs = worst_abs.max(diff);
    }
    let elapsed = start.elapsed();
    let ok = worst_abs < 1e-5 && worst_energy < 1e-4 && elapsed < Duration::from_secs(5);
    verdict(
        1,
        ok,
        &format!(
            "round trip max abs {worst_abs:.2e} < 1e-5, energy rel {worst_energy:.2e} < 1e-4, {:.2}s < 5s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 2 ----

#[test]
fn criterion_2_fourier_correctness() {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xACC2);
    let mut worst_parseval = 0.0f64;
    for _ in 0..40 {
        let h = 8 + rng.below(57);
        let w = 8 + rng.below(57);
        let x = rand_tensor(Shape::new(1, 1 + rng.below(3), h, w), &mut rng, -1.0, 1.0);
        let f = fourier::fft2_stack(&x);
        let ex: f64 = x.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let ef: f64 = f.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        let rel = (ef - (h * w) as f64 * ex).abs() / ((h * w) as f64 * ex);
        worst_parseval = worst_parseval.max(rel);
    }

    // Loss value against a direct O(N^2) discrete-transform reference.
    let mut worst_loss = 0.0f64;
    for &side in &[8usize, 12, 16] {
        let sr = rand_tensor(Shape::new(1, 3, side, side), &mut rng, 0.0, 1.0);
        let hr = rand_tensor(Shape::new(1, 3, side, side), &mut rng, 0.0, 1.0);
        let got = training::frequency_loss_value(&sr, &hr).unwrap();
        let want = oracle::losses::frequency_loss(&to_arr(&sr), &to_arr(&hr));
        worst_loss = worst_loss.max((got - want).abs() / want.abs().max(1e-12));
    }
    let elapsed = start.elapsed();
    let ok = worst_parseval < 1e-3 && worst_loss < 1e-4 && elapsed < Duration::from_secs(10);
    verdict(
        2,
        ok,
        &format!(
            "parseval rel {worst_parseval:.2e} < 1e-3, loss vs direct-sum reference {worst_loss:.2e} < 1e-4, {:.2}s < 10s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 3 ----

#[test]
fn criterion_3_gradient_suite() {
    let start = Instant::now();
    let outcomes = selfcheck::gradient_checks(0xACC3);
    let elapsed = start.elapsed();
    let mut failed = Vec::new();
    for o in &outcomes {
        if !o.passed {
            failed.push(format!("{}: {}", o.name, o.detail));
        }
    }
    let ok = failed.is_empty() && elapsed < Duration::from_secs(120);
    verdict(
        3,
        ok,
        &format!(
            "{} finite-difference cases, rel err < 1e-3 each, {:.1}s < 120s{}",
            outcomes.len(),
            elapsed.as_secs_f64(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join("; ")) },
        ),
    );
}

// ---------------------------------------------------------------- 4 ----

fn reference_config(scale: usize) -> ModelConfig {
    ModelConfig {
        scale,
        channels: 48,
        n_groups: 3,
        n_blocks: 3,
        ffn_ratio: 2,
        dynamic: true,
        freq_domain: FreqDomain::Wavelet,
    }
}

#[test]
fn criterion_4_architecture_bookkeeping() {
    let p2 = reference_config(2).param_count();
    let p3 = reference_config(3).param_count();
    let p4 = reference_config(4).param_count();
    let d3 = p3 - p2;
    let d4 = p4 - p2;
    let total_dev = (p4 as f64 - 587_000.0).abs() / 587_000.0;

    let flops = |scale: usize| {
        let (h, w) = match scale {
            2 => (360, 640),
            _ => (180, 320),
        };
        macs_per_forward(&reference_config(scale), h, w) as f64
    };
    let ratio = flops(2) / flops(4);
    let ratio_dev = (ratio - 3.88_f64).abs() / 3.88;

    let ok = d3 == 6480 && d4 == 15552 && total_dev <= 0.20 && ratio_dev <= 0.15;
    verdict(
        4,
        ok,
        &format!(
            "deltas {d3}/{d4} (want 6480/15552), total(x4) {p4} within {:.1}% of 587K, flop ratio {ratio:.3} within {:.1}% of 3.88",
            100.0 * total_dev,
            100.0 * ratio_dev,
        ),
    );
}

// ---------------------------------------------------------------- 5 ----

#[test]
fn criterion_5_wavelet_attention_locality() {
    // Record one wavelet-attention forward and inspect its matrix products:
    // the attention must form a c x c matrix over exactly hw/4 positions.
    let c = 16;
    let (h, w) = (24, 16);
    let mut specs = Vec::new();
    blocks::wma_specs(&mut specs, "a", c, false);
    let store = dmnet_core::params::ParamStore::init(&specs, 5);
    let mut rng = SeededRng::new(0xACC5);
    let x = rand_tensor(Shape::new(1, c, h, w), &mut rng, -1.0, 1.0);

    let tape = Tape::training();
    let bound = BoundParams::bind(&tape, &store);
    let leaf = tape.leaf(x);
    blocks::wma_forward(&bound, "a", &leaf, true, false).unwrap();

    let quarter = h * w / 4;
    let mut saw_scores = false;
    let mut saw_apply = false;
    let mut off_quarter = Vec::new();
    for op in tape.node_summaries() {
        match op.name {
            "bmm_nt" => {
                // scores: (1,1,c,hw/4) x (1,1,c,hw/4) -> (1,1,c,c)
                let want_in = Shape::new(1, 1, c, quarter);
                let want_out = Shape::new(1, 1, c, c);
                if op.inputs == [want_in, want_in] && op.output == want_out {
                    saw_scores = true;
                } else {
                    off_quarter.push(format!("bmm_nt over {:?}", op.inputs));
                }
            }
            "bmm_nn" => {
                // apply: (1,1,c,c) x (1,1,c,hw/4) -> (1,1,c,hw/4)
                let want_out = Shape::new(1, 1, c, quarter);
                if op.inputs == [Shape::new(1, 1, c, c), want_out] && op.output == want_out {
                    saw_apply = true;
                } else {
                    off_quarter.push(format!("bmm_nn over {:?}", op.inputs));
                }
            }
            _ => {}
        }
    }
    let ok = saw_scores && saw_apply && off_quarter.is_empty();
    verdict(
        5,
        ok,
        &format!(
            "attention products form a {c}x{c} matrix over {quarter} = hw/4 positions{}",
            if off_quarter.is_empty() {
                String::new()
            } else {
                format!("; unexpected: {}", off_quarter.join(", "))
            },
        ),
    );
}

// ---------------------------------------------------------------- 6 ----

/// The overfit target: smooth base plus components near the downscaled
/// Nyquist rate, which plain interpolation cannot recover.
fn overfit_target() -> Tensor {
    let (h, w) = (64usize, 64usize);
    let tau = std::f32::consts::TAU;
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let pc = c as f32 * 0.8;
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f32, y as f32);
                let v = 0.5
                    + 0.18 * (tau * (3.0 * xf + 11.0 * yf) / 64.0 + pc).sin()
                    + 0.15 * (tau * (13.0 * xf - 7.0 * yf) / 64.0 + 1.0 + pc).sin()
                    + 0.12 * (tau * (9.0 * xf + 9.0 * yf) / 64.0).cos();
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).unwrap()
}

fn y_psnr(a: &Tensor, b: &Tensor) -> f64 {
    psnr(&rgb_to_y(a).unwrap(), &rgb_to_y(b).unwrap(), 1.0).unwrap()
}

#[test]
fn criterion_6_overfit_convergence() {
    let start = Instant::now();
    let hr = overfit_target();
    let data = PairedData::from_hr(std::slice::from_ref(&hr), 2).unwrap();

    let cfg = TrainConfig {
        model: ModelConfig {
            scale: 2,
            channels: 16,
            n_groups: 1,
            n_blocks: 1,
            ffn_ratio: 2,
            dynamic: true,
            freq_domain: FreqDomain::Wavelet,
        },
        lambda: 0.1,
        lr0: 2e-3,
        iters: 2000,
        batch: 1,
        patch: 32,
        seed: 6,
        freq_loss: FreqLoss::Fourier,
        augment: false,
        log_every: 500,
        ckpt_every: 0,
    };
    let mut store = cfg.model.init_params(cfg.seed);
    let mut state = AdamState::new(&store);
    train_loop(&cfg, &data, &mut store, &mut state, &mut SilentSink).unwrap();

    let sr = upscale(&cfg.model, &store, data.lr(0)).unwrap();
    let trained = y_psnr(&sr, data.hr(0));
    let bicubic = y_psnr(&bicubic_resize(data.lr(0), 2, 1).unwrap(), data.hr(0));
    let elapsed = start.elapsed();

    let ok = trained > 40.0 && trained - bicubic >= 5.0 && elapsed < Duration::from_secs(600);
    verdict(
        6,
        ok,
        &format!(
            "trained {trained:.2} dB > 40, bicubic {bicubic:.2} dB (gap {:.2} >= 5), {:.0}s < 600s",
            trained - bicubic,
            elapsed.as_secs_f64(),
        ),
    );
}

// ---------------------------------------------------------------- 7 ----

/// Twenty 48x48 textures with dense spectra: a 1/f mixture of random
/// non-integer-frequency plane waves (spectral leakage spreads energy over
/// every bin), a squarish grating, and one sharp oriented edge;
/// deterministic per index.
fn micro_dataset() -> Vec<Tensor> {
    let (h, w) = (48usize, 48usize);
    let tau = std::f32::consts::TAU;
    (0..20u64)
        .map(|i| {
            let mut rng = SeededRng::new(0x333 + i);
            let mut comps = Vec::new();
            let mut norm = 0.0f32;
            for _ in 0..24 {
                let kx = (rng.uniform() * 2.0 - 1.0) * 20.0;
                let ky = (rng.uniform() * 2.0 - 1.0) * 20.0;
                let k = (kx * kx + ky * ky).sqrt().max(1.0);
                let amp = k.powf(-0.85);
                norm += amp;
                comps.push((kx, ky, tau * rng.uniform(), amp));
            }
            // Squarish grating: the fundamental survives 2x downsampling but
            // its odd harmonics do not, so they must be rebuilt phase-aligned.
            let gx = 4.0 + (i % 4) as f32;
            let gy = 3.0 + (i % 3) as f32;
            let gp = tau * rng.uniform();
            let ang = tau * rng.uniform();
            let (ca, sa) = (ang.cos(), ang.sin());
            let edge_d = 12.0 + 24.0 * rng.uniform();
            let mut data = Vec::with_capacity(3 * h * w);
            for c in 0..3 {
                let pc = 0.8 * c as f32;
                for y in 0..h {
                    for x in 0..w {
                        let (xf, yf) = (x as f32, y as f32);
                        let mut s = 0.0f32;
                        for &(kx, ky, ph, amp) in &comps {
                            s += amp * (tau * (kx * xf + ky * yf) / 48.0 + ph + pc).sin();
                        }
                        let v = 0.5
                            + 0.28 * s / norm
                            + 0.14 * (3.0 * (tau * (gx * xf + gy * yf) / 48.0 + gp + pc).sin()).tanh()
                            + 0.13 * ((ca * xf + sa * yf - edge_d) * 2.5).tanh();
                        data.push(v.clamp(0.0, 1.0));
                    }
                }
            }
            Tensor::from_vec(Shape::new(1, 3, h, w), data).unwrap()
        })
        .collect()
}

fn ablation_config(dynamic: bool, domain: FreqDomain, loss: FreqLoss) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            scale: 2,
            channels: 16,
            n_groups: 1,
            n_blocks: 1,
            ffn_ratio: 2,
            dynamic,
            freq_domain: domain,
        },
        lambda: 0.1,
        lr0: 1e-3,
        iters: 5000,
        batch: 2,
        patch: 16,
        seed: 7,
        freq_loss: loss,
        augment: true,
        log_every: 1000,
        ckpt_every: 0,
    }
}

fn train_and_score(cfg: &TrainConfig, data: &PairedData) -> f64 {
    let mut store = cfg.model.init_params(cfg.seed);
    let mut state = AdamState::new(&store);
    train_loop(cfg, data, &mut store, &mut state, &mut SilentSink).unwrap();
    let mut sum = 0.0;
    for i in 0..data.len() {
        let sr = upscale(&cfg.model, &store, data.lr(i)).unwrap();
        let (p, _) = evaluate_pair(&sr, data.hr(i), cfg.model.scale).unwrap();
        sum += p;
    }
    sum / data.len() as f64
}

#[test]
fn criterion_7_ablation_ordering() {
    let start = Instant::now();
    let images = micro_dataset();
    let data = PairedData::from_hr(&images, 2).unwrap();

    let full = train_and_score(
        &ablation_config(true, FreqDomain::Wavelet, FreqLoss::Fourier),
        &data,
    );
    let no_dynamic = train_and_score(
        &ablation_config(false, FreqDomain::Wavelet, FreqLoss::Fourier),
        &data,
    );
    let wavelet_loss = train_and_score(
        &ablation_config(true, FreqDomain::Wavelet, FreqLoss::Wavelet),
        &data,
    );
    let fourier_domain = train_and_score(
        &ablation_config(true, FreqDomain::Fourier, FreqLoss::Fourier),
        &data,
    );
    let elapsed = start.elapsed();

    let slack = 0.05;
    let ok = full >= no_dynamic - slack
        && full >= wavelet_loss - slack
        && full >= fourier_domain - slack;
    verdict(
        7,
        ok,
        &format!(
            "mean eval PSNR: full {full:.3} dB vs no-dynamic {no_dynamic:.3}, wavelet-loss {wavelet_loss:.3}, fourier-domain {fourier_domain:.3} (slack {slack} dB), {:.0}s",
            elapsed.as_secs_f64(),
        ),
    );
}

// ---------------------------------------------------------------- 8 ----

fn run(bin: &str, args: &[&str]) -> std::process::Output {
    Command::new(bin).args(args).output().expect("spawning the release binary")
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let bin = env!("CARGO_BIN_EXE_dmnet");
    let tmp = tempfile::tempdir().unwrap();

    // Fixed-seed training twice from the same config, different out dirs.
    let data_dir = tmp.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    let mut rng = SeededRng::new(0xACC8);
    for i in 0..2 {
        let img = rand_tensor(Shape::new(1, 3, 24, 24), &mut rng, 0.0, 1.0);
        save_png(&data_dir.join(format!("t{i}.png")), &img).unwrap();
    }
    let mut logs = Vec::new();
    let mut ckpts = Vec::new();
    for run_id in 0..2 {
        let out_dir = tmp.path().join(format!("run{run_id}"));
        let config = tmp.path().join(format!("run{run_id}.cfg"));
        std::fs::write(
            &config,
            format!(
                "scale = 2\nchannels = 8\nn_groups = 1\nn_blocks = 1\nffn_ratio = 1\n\
                 lambda = 0.1\nlr0 = 0.001\niters = 20\nbatch = 2\npatch = 8\nseed = 11\n\
                 data_dir = {}\nout_dir = {}\n",
                data_dir.display(),
                out_dir.display(),
            ),
        )
        .unwrap();
        let out = run(bin, &["train", "--config", config.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        logs.push(std::fs::read(out_dir.join("loss.log")).unwrap());
        ckpts.push(out_dir.join("ckpt_20.dmn"));
    }
    let logs_identical = logs[0] == logs[1];

    // Checkpoint round trip: reserializing a loaded snapshot reproduces the
    // exact bytes on disk.
    let disk = std::fs::read(&ckpts[0]).unwrap();
    let ck = checkpoint::from_bytes(&disk).unwrap();
    let rewritten = checkpoint::to_bytes(&ck.train, &ck.store, ck.optimizer.as_ref());
    let ckpt_bit_exact = rewritten == disk;

    // Inference twice from the same checkpoint and input.
    let input = tmp.path().join("in.png");
    let mut rng = SeededRng::new(0xACC9);
    save_png(&input, &rand_tensor(Shape::new(1, 3, 14, 10), &mut rng, 0.0, 1.0)).unwrap();
    let sr_a = tmp.path().join("a.png");
    let sr_b = tmp.path().join("b.png");
    for (out_path, seed) in [(&sr_a, "1"), (&sr_b, "2")] {
        let out = run(
            bin,
            &[
                "infer",
                "--ckpt",
                ckpts[0].to_str().unwrap(),
                "--in",
                input.to_str().unwrap(),
                "--out",
                out_path.to_str().unwrap(),
                "--seed",
                seed,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let pngs_identical = std::fs::read(&sr_a).unwrap() == std::fs::read(&sr_b).unwrap();

    let ok = logs_identical && ckpt_bit_exact && pngs_identical;
    verdict(
        8,
        ok,
        &format!(
            "loss logs identical: {logs_identical}, checkpoint round trip bit-exact: {ckpt_bit_exact}, repeated inference byte-identical: {pngs_identical}"
        ),
    );
}

// ---------------------------------------------------------------- 9 ----

#[test]
fn criterion_9_metrics_conformance() {
    // Uniform |error| of one 8-bit level at peak 1: 20 log10(255) dB.
    let shape = Shape::new(1, 1, 32, 32);
    let a = Tensor::full(shape, 0.5);
    let b = Tensor::full(shape, 0.5 + 1.0 / 255.0);
    let got = psnr(&a, &b, 1.0).unwrap();
    let psnr_ok = (got - 48.13).abs() <= 0.01;

    let mut rng = SeededRng::new(0xACC9);
    let img = rand_tensor(Shape::new(1, 1, 16, 16), &mut rng, 0.0, 1.0);
    let ssim_self = ssim(&img, &img).unwrap();
    let ssim_ok = ssim_self == 1.0;

    // Ideal oracle: the "model" returns the ground truth itself.
    let hr = rand_tensor(Shape::new(1, 3, 20, 20), &mut rng, 0.0, 1.0);
    let (p, s) = evaluate_pair(&hr, &hr, 2).unwrap();
    let oracle_ok = p.is_infinite() && p > 0.0 && s == 1.0;

    let ok = psnr_ok && ssim_ok && oracle_ok;
    verdict(
        9,
        ok,
        &format!(
            "uniform 1/255 error {got:.4} dB (want 48.13 +- 0.01), ssim(a,a) = {ssim_self}, ideal-oracle eval = (+inf, {s})"
        ),
    );
}

// ---------------------------------------------------------------- aux ----

/// Not a numbered criterion: the overfit recipe reproduced end to end
/// through the CLI surface, per the training command's contract.
#[test]
fn cli_overfit_smoke_reproduces_training_artifacts() {
    let bin = env!("CARGO_BIN_EXE_dmnet");
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    save_png(&data_dir.join("pair.png"), &overfit_target()).unwrap();

    let out_dir = tmp.path().join("run");
    let config = tmp.path().join("overfit.cfg");
    std::fs::write(
        &config,
        format!(
            "scale = 2\nchannels = 16\nn_groups = 1\nn_blocks = 1\nffn_ratio = 2\n\
             lambda = 0.1\nlr0 = 0.002\niters = 60\nbatch = 1\npatch = 16\nseed = 6\n\
             data_dir = {}\nout_dir = {}\n",
            data_dir.display(),
            out_dir.display(),
        ),
    )
    .unwrap();
    let out = run(bin, &["train", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ck = checkpoint::load(&out_dir.join("ckpt_60.dmn")).unwrap();
    assert_eq!(ck.train.model.channels, 16);
    let log = std::fs::read_to_string(out_dir.join("loss.log")).unwrap();
    let first: Vec<f64> = log
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|f| f.parse().unwrap())
        .collect();
    let last: Vec<f64> = log
        .lines()
        .last()
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|f| f.parse().unwrap())
        .collect();
    // Fields are lr, pixel, frequency, total; the objective must drop even
    // in a short smoke run.
    assert!(
        last[3] < first[3],
        "total loss should decrease: first {first:?} last {last:?}"
    );
}
