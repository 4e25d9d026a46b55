"""Per-pixel inner loops, each with a numba path and a vectorised numpy path.

The numba path is used when numba imports and ``VSRTRADEOFF_DISABLE_NUMBA`` is
unset (or ``0``). Both paths accumulate in the same order where it matters, so
switching backends changes results by at most a few ulps.
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

ENV_DISABLE = "VSRTRADEOFF_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get(ENV_DISABLE, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


# ---------------------------------------------------------------------------
# bilinear taps with edge clamp

def _bilinear_taps(flow):
    """Return (y0, x0, y1, x1, w00, w01, w10, w11) for sampling at p + flow(p)."""
    h, w = flow.shape[:2]
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    x = np.clip(jj + flow[..., 0], 0.0, w - 1.0)
    y = np.clip(ii + flow[..., 1], 0.0, h - 1.0)
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = x - x0f
    fy = y - y0f
    x0 = x0f.astype(np.intp)
    y0 = y0f.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return (
        y0, x0, y1, x1,
        (1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy,
    )


def _warp_gather_np(img, flow):
    y0, x0, y1, x1, w00, w01, w10, w11 = _bilinear_taps(flow)
    return (
        w00[..., None] * img[y0, x0]
        + w01[..., None] * img[y0, x1]
        + w10[..., None] * img[y1, x0]
        + w11[..., None] * img[y1, x1]
    )


def _warp_scatter_np(g, flow):
    h, w, c = g.shape
    y0, x0, y1, x1, w00, w01, w10, w11 = _bilinear_taps(flow)
    # interleave taps per pixel so bincount adds in the same order as the loop kernel
    idx = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], axis=-1).ravel()
    wts = np.stack([w00, w01, w10, w11], axis=-1).reshape(-1, 4)
    out = np.empty((h * w, c))
    for k in range(c):
        contrib = (wts * g[..., k].reshape(-1, 1)).ravel()
        out[:, k] = np.bincount(idx, weights=contrib, minlength=h * w)
    return out.reshape(h, w, c)


def _resample_axis0_np(a, idx, wts):
    # a: (n, ...); idx, wts: (m, K)
    taps = a[idx]  # (m, K, ...)
    extra = (1,) * (a.ndim - 1)
    return np.sum(taps * wts.reshape(wts.shape + extra), axis=1)


if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _warp_gather_nb(img, flow):
        h, w, c = img.shape
        out = np.empty_like(img)
        for i in range(h):
            for j in range(w):
                x = min(max(j + flow[i, j, 0], 0.0), w - 1.0)
                y = min(max(i + flow[i, j, 1], 0.0), h - 1.0)
                x0f = np.floor(x)
                y0f = np.floor(y)
                fx = x - x0f
                fy = y - y0f
                x0 = int(x0f)
                y0 = int(y0f)
                x1 = min(x0 + 1, w - 1)
                y1 = min(y0 + 1, h - 1)
                w00 = (1.0 - fx) * (1.0 - fy)
                w01 = fx * (1.0 - fy)
                w10 = (1.0 - fx) * fy
                w11 = fx * fy
                for k in range(c):
                    out[i, j, k] = (
                        w00 * img[y0, x0, k]
                        + w01 * img[y0, x1, k]
                        + w10 * img[y1, x0, k]
                        + w11 * img[y1, x1, k]
                    )
        return out

    @numba.njit(cache=True, nogil=True)
    def _warp_scatter_nb(g, flow):
        h, w, c = g.shape
        out = np.zeros((h, w, c))
        for k in range(c):
            for i in range(h):
                for j in range(w):
                    x = min(max(j + flow[i, j, 0], 0.0), w - 1.0)
                    y = min(max(i + flow[i, j, 1], 0.0), h - 1.0)
                    x0f = np.floor(x)
                    y0f = np.floor(y)
                    fx = x - x0f
                    fy = y - y0f
                    x0 = int(x0f)
                    y0 = int(y0f)
                    x1 = min(x0 + 1, w - 1)
                    y1 = min(y0 + 1, h - 1)
                    v = g[i, j, k]
                    out[y0, x0, k] += (1.0 - fx) * (1.0 - fy) * v
                    out[y0, x1, k] += fx * (1.0 - fy) * v
                    out[y1, x0, k] += (1.0 - fx) * fy * v
                    out[y1, x1, k] += fx * fy * v
        return out

    @numba.njit(cache=True, nogil=True)
    def _resample_rows_nb(a, idx, wts):
        # a: (n, cols); returns (m, cols)
        m, ntaps = idx.shape
        cols = a.shape[1]
        out = np.zeros((m, cols))
        for o in range(m):
            for t in range(ntaps):
                src = idx[o, t]
                wt = wts[o, t]
                for q in range(cols):
                    out[o, q] += wt * a[src, q]
        return out


def warp_gather(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Bilinear sample of ``img`` (H, W, C) at p + flow(p), coordinates clamped to the frame."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    flow = np.ascontiguousarray(flow, dtype=np.float64)
    if _backend == "numba":
        return _warp_gather_nb(img, flow)
    return _warp_gather_np(img, flow)


def warp_scatter(g: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Transpose of :func:`warp_gather`: scatter each g(p) onto its four source taps."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    flow = np.ascontiguousarray(flow, dtype=np.float64)
    if _backend == "numba":
        return _warp_scatter_nb(g, flow)
    return _warp_scatter_np(g, flow)


def resample_axis0(a: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """out[o] = sum_k wts[o, k] * a[idx[o, k]] along the first axis."""
    a = np.asarray(a, dtype=np.float64)
    if _backend == "numba":
        flat = np.ascontiguousarray(a.reshape(a.shape[0], -1))
        out = _resample_rows_nb(flat, np.ascontiguousarray(idx), np.ascontiguousarray(wts))
        return out.reshape((idx.shape[0],) + a.shape[1:])
    return _resample_axis0_np(a, idx, wts)
