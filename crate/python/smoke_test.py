#!/usr/bin/env python3
"""Smoke test for the dmnet_py extension module.

Builds nothing itself: run `cargo build -p dmnet-python` (or --release)
first, then `python3 python/smoke_test.py`. The script copies the built
cdylib next to a temp dir under the importable name and exercises the
bindings end to end.
"""

import pathlib
import shutil
import sys
import tempfile

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent


def import_built_module():
    candidates = [
        ROOT / "target" / "release" / "libdmnet_py.so",
        ROOT / "target" / "debug" / "libdmnet_py.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no built library found; run: cargo build -p dmnet-python")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = pathlib.Path(tempfile.mkdtemp(prefix="dmnet_py_"))
    shutil.copy2(newest, stage / "dmnet_py.so")
    sys.path.insert(0, str(stage))
    import dmnet_py

    print(f"ok: imported {newest.relative_to(ROOT)}")
    return dmnet_py


def main():
    dm = import_built_module()
    rng = np.random.default_rng(0)

    # Wavelet round trip and the quartered layout.
    x = rng.uniform(size=(2, 3, 16, 24)).astype(np.float32)
    sub = dm.dwt2(x)
    assert sub.shape == (2, 12, 8, 12), sub.shape
    back = dm.idwt2(sub)
    assert np.max(np.abs(back - x)) < 1e-5
    print("ok: dwt2/idwt2 round trip")

    # Fourier split: Parseval and the phase range.
    y = rng.uniform(size=(1, 3, 16, 16)).astype(np.float32)
    amp, phase = dm.fft_amplitude_phase(y)
    assert amp.shape == y.shape and phase.shape == y.shape
    spatial = float((y.astype(np.float64) ** 2).sum())
    spectral = float((amp.astype(np.float64) ** 2).sum()) / (16 * 16)
    assert abs(spectral - spatial) < 1e-3 * spatial
    assert phase.min() > -np.pi and phase.max() <= np.pi
    print("ok: fft amplitude/phase (energy preserved)")

    # Metrics sentinels and bicubic shapes.
    img = rng.uniform(size=(1, 3, 20, 20)).astype(np.float32)
    assert dm.psnr(img, img) == float("inf")
    assert dm.ssim(img[:, :1], img[:, :1]) == 1.0
    p, s = dm.evaluate_pair(img, img, 2)
    assert p == float("inf") and s == 1.0
    small = dm.bicubic_resize(img, 1, 2)
    assert small.shape == (1, 3, 10, 10)
    print("ok: psnr/ssim/evaluate_pair/bicubic_resize")

    # Model construction, odd-size inference, bookkeeping.
    up = dm.Upscaler(scale=2, channels=8, n_groups=1, n_blocks=1, ffn_ratio=1, seed=3)
    assert up.scale == 2 and up.param_count() > 0 and up.macs(16, 16) > 0
    cfg = up.config()
    assert cfg["channels"] == 8 and cfg["freq_domain"] == "wavelet"
    odd = rng.uniform(size=(3, 9, 11)).astype(np.float32)
    sr = up.upscale(odd)
    assert sr.shape == (3, 18, 22), sr.shape
    batched = up.upscale(odd[None])
    assert batched.shape == (1, 3, 18, 22)
    assert np.array_equal(sr, batched[0])
    print(f"ok: {up!r}")

    # A short fit on two tiny images should reduce the total loss.
    hrs = [rng.uniform(size=(3, 24, 24)).astype(np.float32) * 0.5 + 0.25 for _ in range(2)]
    first = up.train(hrs, iters=1, lr0=1e-3, batch=2, patch=8, seed=5)
    trained = dm.Upscaler(scale=2, channels=8, n_groups=1, n_blocks=1, ffn_ratio=1, seed=3)
    last = trained.train(hrs, iters=60, lr0=1e-3, batch=2, patch=8, seed=5)
    assert all(np.isfinite(v) for v in first + last)
    assert last[2] < first[2], (first, last)
    print(f"ok: train 60 iters (total loss {first[2]:.4f} -> {last[2]:.4f})")

    # Checkpoint round trip preserves behavior bit for bit.
    with tempfile.TemporaryDirectory() as td:
        ck = pathlib.Path(td) / "weights.dmn"
        trained.save(str(ck))
        restored = dm.Upscaler.load(str(ck))
    probe = rng.uniform(size=(3, 12, 12)).astype(np.float32)
    assert np.array_equal(trained.upscale(probe), restored.upscale(probe))
    assert restored.param_count() == trained.param_count()
    print("ok: checkpoint save/load round trip")

    print("smoke test passed")


if __name__ == "__main__":
    main()
