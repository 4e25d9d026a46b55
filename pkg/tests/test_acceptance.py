"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import filecmp
import time

import numpy as np
import pytest

import oracles
from vsrtradeoff import kernels
from vsrtradeoff.cli import run
from vsrtradeoff.experiment import (
    DEFAULT_BETAS,
    CorpusSpec,
    EvalManifest,
    beta_sweep,
    check_monotone,
    evaluate_methods,
    noisy_static_pair,
    write_corpus,
)
from vsrtradeoff.flow import read_flo, warp_adjoint, warp_backward, write_flo
from vsrtradeoff.frame import bicubic_resize
from vsrtradeoff.joint_loss import LossConfig, joint_loss, joint_loss_grad
from vsrtradeoff.metrics import mse, ssim, warping_error_video

pytestmark = pytest.mark.acceptance


def _warm_up():
    # keep numba compilation out of the timed regions
    img = np.zeros((2, 2, 1))
    flow = np.zeros((2, 2, 2))
    kernels.warp_gather(img, flow)
    kernels.warp_scatter(img, flow)


def _random_mask(rng, h, w):
    m = (rng.random((h, w)) > 0.4).astype(float)
    m[rng.integers(h), rng.integers(w)] = 1.0
    return m


def test_warping_error_matches_loop_oracle(criterion):
    _warm_up()
    rng = np.random.default_rng(101)
    worst, elapsed = 0.0, 0.0
    for _ in range(100):
        h, w = rng.integers(1, 9, 2)
        t = int(rng.integers(2, 5))
        c = int(rng.choice([1, 3]))
        video = rng.random((t, h, w, c))
        flows = [oracles.random_flow(rng, h, w, 2.0) for _ in range(t - 1)]
        masks = [_random_mask(rng, h, w) for _ in range(t - 1)]
        start = time.perf_counter()
        got = warping_error_video(video, flows, masks)
        elapsed += time.perf_counter() - start
        worst = max(worst, abs(got - oracles.loop_warping_error(video, flows, masks)))
    criterion(1, "warping error equals the nested-loop oracle", worst < 1e-10 and elapsed < 5,
              f"max abs diff {worst:.2e}, {elapsed:.2f} s")


def test_joint_loss_matches_loop_oracle(criterion):
    _warm_up()
    rng = np.random.default_rng(202)
    worst, elapsed = 0.0, 0.0
    for _ in range(100):
        h, w = rng.integers(1, 9, 2)
        c = int(rng.choice([1, 3]))
        hr_t, hr_n = rng.random((2, h, w, c))
        sr_t = hr_t + rng.normal(0, 0.1, hr_t.shape)
        sr_n = hr_n + rng.normal(0, 0.1, hr_n.shape)
        flow = oracles.random_flow(rng, h, w, 2.0)
        alpha, beta = rng.uniform(0.1, 2), rng.uniform(0, 10)
        start = time.perf_counter()
        got = joint_loss(sr_t, sr_n, hr_t, hr_n, flow, LossConfig(alpha=alpha, beta=beta)).total
        elapsed += time.perf_counter() - start
        worst = max(worst, abs(got - oracles.loop_joint_loss(sr_t, sr_n, hr_t, hr_n, flow, alpha, beta)[0]))
    criterion(2, "joint loss equals the nested-loop oracle", worst < 1e-10 and elapsed < 5,
              f"max abs diff {worst:.2e}, {elapsed:.2f} s")


def _fd_grad(sr, hr, flow, cfg, h=1e-4):
    grads = []
    for which in (0, 1):
        g = np.zeros_like(sr[which])
        for idx in np.ndindex(g.shape):
            vals = []
            for sign in (1, -1):
                x = [sr[0].copy(), sr[1].copy()]
                x[which][idx] += sign * h
                vals.append(joint_loss(x[0], x[1], hr[0], hr[1], flow, cfg).total)
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        grads.append(g)
    return grads


def test_gradient_matches_finite_differences(criterion):
    _warm_up()
    rng = np.random.default_rng(303)
    worst, channels = 0.0, set()
    start = time.perf_counter()
    for i in range(50):
        h, w = rng.integers(3, 6, 2)
        c = 3 if i % 2 else 1
        channels.add(c)
        hr = rng.random((2, h, w, c))
        sr = hr + rng.normal(0, 0.1, hr.shape)
        flow = oracles.random_flow(rng, h, w, 1.5)
        cfg = LossConfig(alpha=rng.uniform(0.1, 1), beta=rng.uniform(0.1, 10))
        analytic = joint_loss_grad(sr[0], sr[1], hr[0], hr[1], flow, cfg)
        numeric = _fd_grad(sr, hr, flow, cfg)
        for a, n in zip(analytic, numeric):
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    criterion(3, "analytic gradient equals central differences",
              worst < 1e-4 and elapsed < 30 and channels == {1, 3},
              f"max rel err {worst:.2e}, {elapsed:.2f} s")


def test_adjoint_identity(criterion):
    rng = np.random.default_rng(404)
    worst = 0.0
    for i in range(100):
        h, w = rng.integers(1, 17, 2)
        c = int(rng.choice([1, 3]))
        x, y = rng.normal(size=(2, h, w, c))
        flow = oracles.random_flow(rng, h, w, 3.0)
        with kernels.use_backend(kernels.get_backend() if i % 2 or not kernels.HAVE_NUMBA else "numpy"):
            lhs = float(np.sum(warp_backward(x, flow) * y))
            rhs = float(np.sum(x * warp_adjoint(y, flow)))
        worst = max(worst, abs(lhs - rhs))
    criterion(4, "warp and adjoint satisfy the inner-product identity", worst < 1e-6, f"max diff {worst:.2e}")


def test_tradeoff_monotone(criterion):
    _warm_up()
    start = time.perf_counter()
    hr_t, hr_n, flow = noisy_static_pair()
    curve = beta_sweep(hr_t, hr_n, flow, DEFAULT_BETAS, LossConfig(alpha=0.5))
    elapsed = time.perf_counter() - start
    check = check_monotone(curve, rel_slack=1e-6)
    mse0 = curve.points[0].mse
    assert [p.beta for p in curve.points] == [0, 0.01, 0.1, 1, 10, 100]
    detail = "; ".join(check.messages) or (
        f"warp {curve.points[0].warping_error:.3g} -> {curve.points[-1].warping_error:.3g}, "
        f"mse {mse0:.2g} -> {curve.points[-1].mse:.3g}, {elapsed:.1f} s")
    criterion(5, "beta sweep trades spatial for temporal quality monotonically",
              check.passed and mse0 < 1e-8 and elapsed < 120, detail)


def test_bicubic_is_smoother_than_independent_noise(criterion, tmp_path):
    start = time.perf_counter()
    manifest = EvalManifest.from_file(write_corpus(tmp_path, CorpusSpec()))
    result = evaluate_methods(manifest)
    elapsed = time.perf_counter() - start
    s = result.summary
    bic, noise = s["bicubic"], s["noise_indep"]
    ok = (not result.errors and bic["warping_error"] < noise["warping_error"] and bic["mse"] > noise["mse"]
          and elapsed < 60)
    criterion(6, "bicubic has lower warping error and higher MSE than independent noise", ok,
              f"warp {bic['warping_error']:.3g} < {noise['warping_error']:.3g}, "
              f"mse {bic['mse']:.3g} > {noise['mse']:.3g}, {elapsed:.1f} s")


def test_metric_sanity(criterion, tmp_path):
    rng = np.random.default_rng(707)
    failures = []
    for _ in range(20):
        f = rng.random((int(rng.integers(11, 30)), int(rng.integers(11, 30)), 3))
        g = rng.random(f.shape)
        luma_f, luma_g = f[..., :1], g[..., :1]
        if mse(f, f) != 0.0:
            failures.append("mse(f,f)")
        if abs(ssim(luma_f, luma_f) - 1) > 1e-9:
            failures.append("ssim(f,f)")
        if abs(ssim(luma_f, luma_g) - ssim(luma_g, luma_f)) > 1e-12:
            failures.append("ssim symmetry")
        flow = rng.normal(0, 5, f.shape[:2] + (2,)).astype(np.float32)
        write_flo(flow, tmp_path / "f.flo")
        back = read_flo(tmp_path / "f.flo")
        if back.astype(np.float32).tobytes() != flow.tobytes():
            failures.append(".flo round trip")
        if not np.array_equal(bicubic_resize(f, 1), f):
            failures.append("bicubic scale 1")
        const = np.full(f.shape, rng.random())
        for scale in (0.25, 0.5, 2, 4):
            if np.max(np.abs(bicubic_resize(const, scale) - const[0, 0, 0])) > 1e-9:
                failures.append(f"constant resample x{scale}")
    criterion(7, "metric and resampling sanity checks", not failures, ", ".join(sorted(set(failures))))


def _tree_identical(a, b) -> bool:
    cmp = filecmp.dircmp(a, b)
    files = cmp.common_files
    if cmp.left_only or cmp.right_only or not files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    return not mismatch and not errors


def test_outputs_identical_across_threads(criterion, tmp_path):
    manifest = write_corpus(tmp_path / "corpus", CorpusSpec(frames=3))
    runs = [("1a", 1), ("1b", 1), ("2", 2), ("4", 4)]
    codes = []
    for name, threads in runs:
        codes.append(run(["evaluate", "-q", "--manifest", str(manifest), "--threads", str(threads),
                          "--out", str(tmp_path / f"eval_{name}")]))
        codes.append(run(["tradeoff", "-q", "--synthetic", "--size", "32", "--threads", str(threads),
                          "--traces", "--out", str(tmp_path / f"trade_{name}")]))
    same = all(
        _tree_identical(tmp_path / f"{kind}_1a", tmp_path / f"{kind}_{name}")
        for kind in ("eval", "trade") for name, _ in runs[1:]
    )
    criterion(8, "evaluate and tradeoff outputs are byte-identical across runs and thread counts",
              same and codes == [0] * len(codes), f"exit codes {codes}")
