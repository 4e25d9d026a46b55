"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--size 256] [--repeat 5]

Each row reports the best of ``--repeat`` runs per backend, after one
untimed warm-up call so JIT compilation is excluded.
"""

import argparse
import time

import numpy as np

from vsrtradeoff import kernels
from vsrtradeoff.experiment import noisy_static_pair
from vsrtradeoff.frame import bicubic_resize
from vsrtradeoff.joint_loss import LossConfig, minimize


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    img = rng.random((size, size, 3))
    flow = rng.normal(0, 3, (size, size, 2))
    hr_t, hr_n, zero = noisy_static_pair(size=min(size, 64), seed=1)
    cfg = LossConfig(beta=1.0, max_iters=50, grad_tol=1e-30)
    return {
        "warp gather": lambda: kernels.warp_gather(img, flow),
        "warp scatter": lambda: kernels.warp_scatter(img, flow),
        "resize x1/4": lambda: bicubic_resize(img, 0.25),
        "resize x4": lambda: bicubic_resize(img[: size // 4, : size // 4], 4),
        "minimise 50 it": lambda: minimize(hr_t, hr_n, zero, hr_t * 0.9, hr_n * 0.9, cfg),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="frame side length")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    todo = cases(args.size, np.random.default_rng(args.seed))
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, fn in todo.items():
        timings = {}
        for backend in ("numpy", "numba"):
            with kernels.use_backend(backend):
                timings[backend] = best_of(fn, args.repeat)
        np_ms, nb_ms = timings["numpy"] * 1e3, timings["numba"] * 1e3
        print(f"{name:<16}{np_ms:>12.2f}{nb_ms:>12.2f}{np_ms / nb_ms:>9.1f}x")


if __name__ == "__main__":
    main()
