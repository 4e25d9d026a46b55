"""Spatial metrics (MSE on RGB, SSIM on luma) and the masked warping error."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .flow import as_flow, warp_backward
from .frame import FrameError, as_frame, as_video, check_same_shape, to_luma
from .masks import as_mask


class ZeroMaskError(ValueError):
    """A frame pair has no valid pixels, so its normalised warping error is undefined."""

    def __init__(self, pair_index: int):
        super().__init__(f"pair {pair_index}: mask sums to zero (fully occluded pair)")
        self.pair_index = pair_index


@dataclass(frozen=True)
class SSIMConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0


@dataclass(frozen=True)
class PairWarpResult:
    masked_sum: float
    mask_sum: float

    @property
    def normalized(self) -> float:
        return self.masked_sum / self.mask_sum


@dataclass(frozen=True)
class MetricReport:
    method: str
    video: str
    mse: float
    ssim: float
    warping_error: float

    @property
    def one_minus_ssim(self) -> float:
        return 1.0 - self.ssim


CHANNEL_REDUCTIONS = ("mean", "sum")


def mse(a, b) -> float:
    a = as_frame(a, "a")
    b = as_frame(b, "b")
    check_same_shape(("a", a), ("b", b))
    return float(np.mean((a - b) ** 2))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim_map(a, b, cfg: SSIMConfig = SSIMConfig()) -> np.ndarray:
    a = as_frame(a, "a")
    b = as_frame(b, "b")
    check_same_shape(("a", a), ("b", b))
    if a.shape[2] != 1:
        raise FrameError("ssim expects single-channel (luma) frames")
    if min(a.shape[:2]) < cfg.window:
        raise FrameError(f"frame {a.shape[:2]} smaller than the {cfg.window}x{cfg.window} window")
    x, y = a[..., 0], b[..., 0]
    g = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a, b, cfg: SSIMConfig = SSIMConfig()) -> float:
    """Mean SSIM over all valid 11x11 Gaussian windows of two luma frames."""
    return float(np.mean(ssim_map(a, b, cfg)))


def _channel_reduce(sq: np.ndarray, how: str) -> np.ndarray:
    if how == "mean":
        return sq.mean(axis=-1)
    if how == "sum":
        return sq.sum(axis=-1)
    raise ValueError(f"channel reduction must be one of {CHANNEL_REDUCTIONS}, got {how!r}")


def warping_error_pair(v_t, v_next, flow, mask, channels: str = "mean") -> PairWarpResult:
    """Masked squared difference between ``v_t`` and ``v_next`` warped back along ``flow``."""
    v_t = as_frame(v_t, "v_t")
    v_next = as_frame(v_next, "v_next")
    check_same_shape(("v_t", v_t), ("v_next", v_next))
    flow = as_flow(flow)
    m = as_mask(mask, v_t.shape[:2])
    diff = _channel_reduce((v_t - warp_backward(v_next, flow)) ** 2, channels)
    mask_sum = float(np.sum(m))
    if mask_sum == 0.0:
        return PairWarpResult(0.0, 0.0)
    return PairWarpResult(float(np.sum(m * diff)), mask_sum)


def warping_error_video(video, flows: Sequence, masks: Sequence, channels: str = "mean") -> float:
    """Average over consecutive pairs of the mask-normalised warping error."""
    v = as_video(video)
    n_pairs = v.shape[0] - 1
    if n_pairs < 1:
        raise FrameError("warping error needs at least two frames")
    if len(flows) != n_pairs or len(masks) != n_pairs:
        raise ValueError(f"need {n_pairs} flows and masks, got {len(flows)} and {len(masks)}")
    total = 0.0
    for t in range(n_pairs):
        res = warping_error_pair(v[t], v[t + 1], flows[t], masks[t], channels)
        if res.mask_sum == 0.0:
            raise ZeroMaskError(t)
        total += res.normalized
    return total / n_pairs


def video_spatial_metrics(hr, sr) -> tuple[float, float]:
    """Per-video MSE (RGB) and SSIM (luma), each averaged over frames."""
    hr = as_video(hr, "hr")
    sr = as_video(sr, "sr")
    if hr.shape != sr.shape:
        raise FrameError(f"dimension mismatch: hr {hr.shape} vs sr {sr.shape}")
    mses = [mse(a, b) for a, b in zip(hr, sr)]
    ssims = [ssim(to_luma(a), to_luma(b)) for a, b in zip(hr, sr)]
    return math.fsum(mses) / len(mses), math.fsum(ssims) / len(ssims)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    videos: int
    mse: float
    ssim: float
    one_minus_ssim: float
    warping_error: float

    def as_dict(self) -> dict:
        return {
            "videos": self.videos,
            "mse": self.mse,
            "ssim": self.ssim,
            "one_minus_ssim": self.one_minus_ssim,
            "warping_error": self.warping_error,
        }


def aggregate_dataset(reports: Iterable[MetricReport]) -> dict[str, MethodSummary]:
    """Unweighted per-method mean of per-video values, keyed in first-seen method order."""
    grouped: dict[str, list[MetricReport]] = {}
    for r in reports:
        grouped.setdefault(r.method, []).append(r)
    if not grouped:
        raise ValueError("no reports to aggregate")
    out = {}
    for method, rs in grouped.items():
        n = len(rs)
        out[method] = MethodSummary(
            method=method,
            videos=n,
            mse=math.fsum(r.mse for r in rs) / n,
            ssim=math.fsum(r.ssim for r in rs) / n,
            one_minus_ssim=math.fsum(r.one_minus_ssim for r in rs) / n,
            warping_error=math.fsum(r.warping_error for r in rs) / n,
        )
    return out
