//! End-to-end command tests: training artifacts, inference round trips,
//! evaluation reports, and the binary's argument surface.

use std::path::Path;
use std::process::Command;

use dmnet_cli::commands::{cmd_eval, cmd_infer, cmd_train};
use dmnet_cli::config::RunConfig;
use dmnet_cli::pngio::{load_png, save_png};
use dmnet_core::checkpoint;
use dmnet_core::model::{FreqDomain, ModelConfig};
use dmnet_core::rng::SeededRng;
use dmnet_core::training::{FreqLoss, TrainConfig};
use dmnet_core::{Shape, Tensor};

fn tiny_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            scale: 2,
            channels: 8,
            n_groups: 1,
            n_blocks: 1,
            ffn_ratio: 1,
            dynamic: true,
            freq_domain: FreqDomain::Wavelet,
        },
        lambda: 0.1,
        lr0: 1e-3,
        iters: 30,
        batch: 2,
        patch: 8,
        seed,
        freq_loss: FreqLoss::Fourier,
        augment: true,
        log_every: 1,
        ckpt_every: 0,
    }
}

/// Deterministic photo-like test image: smooth gradients plus texture.
fn test_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let phase = rng.uniform();
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = 0.5
                    + 0.25 * ((x as f32 * 0.7 + phase * 6.0 + c as f32).sin())
                    + 0.2 * ((y as f32 * 0.9 - x as f32 * 0.3).cos())
                    + 0.05 * (rng.uniform() - 0.5);
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).unwrap()
}

fn write_dataset(dir: &Path, sizes: &[(usize, usize)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, &(h, w)) in sizes.iter().enumerate() {
        save_png(&dir.join(format!("img_{i}.png")), &test_image(h, w, 1000 + i as u64)).unwrap();
    }
}

#[test]
fn train_writes_log_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_dataset(&data_dir, &[(24, 24), (20, 28)]);
    let cfg = RunConfig {
        train: tiny_train_config(3),
        data_dir: Some(data_dir),
        out_dir: tmp.path().join("run"),
    };
    let final_ckpt = cmd_train(&cfg).unwrap();
    assert!(final_ckpt.ends_with("ckpt_30.dmn"));

    let log = std::fs::read_to_string(cfg.out_dir.join("loss.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 30, "cadence of 1 for a 30-iteration run");
    for line in &lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 5, "iter lr pixel fre total: {line}");
        fields[0].parse::<usize>().unwrap();
        for f in &fields[1..] {
            assert!(f.parse::<f64>().unwrap().is_finite(), "{line}");
        }
    }
    assert!(lines[0].starts_with("0 "));

    // Periodic snapshots at iters/10 plus the final one.
    for iter in [3, 15, 30] {
        let ck = checkpoint::load(&cfg.out_dir.join(format!("ckpt_{iter}.dmn"))).unwrap();
        assert_eq!(ck.train.model, cfg.train.model);
        assert_eq!(ck.optimizer.as_ref().map(|s| s.step_count()), Some(iter as u64));
    }
}

#[test]
fn train_without_data_dir_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        train: tiny_train_config(0),
        data_dir: None,
        out_dir: tmp.path().join("run"),
    };
    let err = cmd_train(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("data_dir"), "{err:#}");
}

#[test]
fn train_missing_data_dir_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        train: tiny_train_config(0),
        data_dir: Some(tmp.path().join("nowhere")),
        out_dir: tmp.path().join("run"),
    };
    let err = cmd_train(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("nowhere"), "{err:#}");
}

#[test]
fn train_rejects_images_smaller_than_the_patch() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_dataset(&data_dir, &[(24, 24), (12, 12)]);
    let mut tc = tiny_train_config(0);
    tc.patch = 8; // img_1 downscales to 6x6 < 8
    let cfg = RunConfig { train: tc, data_dir: Some(data_dir), out_dir: tmp.path().join("run") };
    let err = cmd_train(&cfg).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("img_1.png"), "{msg}");
    assert!(msg.contains("patch"), "{msg}");
}

/// A checkpoint with freshly initialized (untrained) weights is enough to
/// exercise the inference and evaluation plumbing.
fn fresh_checkpoint(dir: &Path, seed: u64) -> std::path::PathBuf {
    let tc = tiny_train_config(seed);
    let store = tc.model.init_params(seed);
    let path = dir.join("fresh.dmn");
    checkpoint::save(&path, &tc, &store, None).unwrap();
    path
}

#[test]
fn infer_scales_odd_inputs_and_reproduces_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = fresh_checkpoint(tmp.path(), 9);
    let input = tmp.path().join("in.png");
    save_png(&input, &test_image(9, 11, 42)).unwrap();

    let out1 = tmp.path().join("out1.png");
    let out2 = tmp.path().join("out2.png");
    cmd_infer(&ckpt, &input, &out1).unwrap();
    cmd_infer(&ckpt, &input, &out2).unwrap();

    let sr = load_png(&out1).unwrap();
    assert_eq!(sr.shape(), Shape::new(1, 3, 18, 22), "output dims are scale x input dims");
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "same input twice gives a byte-identical PNG"
    );
}

#[test]
fn eval_writes_both_report_forms() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = fresh_checkpoint(tmp.path(), 11);
    let data_dir = tmp.path().join("set");
    write_dataset(&data_dir, &[(30, 26), (27, 33)]);
    let out_dir = tmp.path().join("reports");

    let report = cmd_eval(&ckpt, &data_dir, Some(2), &out_dir).unwrap();
    assert_eq!(report.entries.len(), 2);
    assert_eq!(report.scale, 2);
    assert_eq!(report.border, 2);
    let mean: f64 = report.entries.iter().map(|e| e.psnr).sum::<f64>() / 2.0;
    assert!((report.mean_psnr - mean).abs() < 1e-12);

    let txt = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(txt.contains("set"), "{txt}");
    let kv = std::fs::read_to_string(out_dir.join("report.kv")).unwrap();
    let lines: Vec<&str> = kv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("img_0 "), "{kv}");
    assert!(lines[2].starts_with("mean "), "{kv}");
}

#[test]
fn eval_rejects_scale_mismatch_and_empty_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = fresh_checkpoint(tmp.path(), 1);
    let data_dir = tmp.path().join("set");
    write_dataset(&data_dir, &[(30, 26)]);

    let err = cmd_eval(&ckpt, &data_dir, Some(3), &tmp.path().join("r")).unwrap_err();
    assert!(format!("{err:#}").contains("scale 2"), "{err:#}");

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let err = cmd_eval(&ckpt, &empty, None, &tmp.path().join("r")).unwrap_err();
    assert!(format!("{err:#}").contains("no PNG images"), "{err:#}");
}

/// Drives the installed binary itself so the flag surface stays honest.
#[test]
fn binary_runs_the_full_surface() {
    let bin = env!("CARGO_BIN_EXE_dmnet");
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_dataset(&data_dir, &[(24, 24), (20, 28)]);
    let out_dir = tmp.path().join("run");
    let config = tmp.path().join("run.cfg");
    std::fs::write(
        &config,
        format!(
            "# desk-sized smoke recipe\n\
             scale = 2\nchannels = 8\nn_groups = 1\nn_blocks = 1\nffn_ratio = 1\n\
             lambda = 0.1\nlr0 = 0.001\niters = 6\nbatch = 2\npatch = 8\nseed = 5\n\
             data_dir = {}\nout_dir = {}\n",
            data_dir.display(),
            out_dir.display()
        ),
    )
    .unwrap();

    let train = Command::new(bin)
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let ckpt = out_dir.join("ckpt_6.dmn");
    assert!(ckpt.exists());
    // The --seed flag overrides the config's seed inside the checkpoint.
    assert_eq!(checkpoint::load(&ckpt).unwrap().train.seed, 7);

    let input = tmp.path().join("in.png");
    save_png(&input, &test_image(10, 12, 77)).unwrap();
    let sr_path = tmp.path().join("sr.png");
    let infer = Command::new(bin)
        .args(["infer", "--ckpt"])
        .arg(&ckpt)
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&sr_path)
        .output()
        .unwrap();
    assert!(infer.status.success(), "{}", String::from_utf8_lossy(&infer.stderr));
    assert_eq!(load_png(&sr_path).unwrap().shape(), Shape::new(1, 3, 20, 24));

    let eval = Command::new(bin)
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .arg("--in")
        .arg(&data_dir)
        .arg("--out")
        .arg(tmp.path().join("reports"))
        .args(["--scale", "2"])
        .output()
        .unwrap();
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(tmp.path().join("reports/report.kv").exists());

    let info = Command::new(bin).args(["info", "--config"]).arg(&config).output().unwrap();
    assert!(info.status.success());
    let text = String::from_utf8_lossy(&info.stdout);
    assert!(text.contains("parameters"), "{text}");
    assert!(text.contains("total"), "{text}");

    let bad_scale = Command::new(bin).args(["info", "--scale", "5"]).output().unwrap();
    assert!(!bad_scale.status.success(), "scale outside 2..=4 must be rejected");
}

/// The corrupted-transform hook must flip the suite to a nonzero exit and
/// name the failing check.
#[test]
fn binary_selfcheck_fault_injection_fails() {
    let bin = env!("CARGO_BIN_EXE_dmnet");
    let out = Command::new(bin)
        .args(["selfcheck", "--fault", "flip-haar-sign"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("haar round trip"), "{text}");
    assert!(text.contains("FAIL"), "{text}");
}
