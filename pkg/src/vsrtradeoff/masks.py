"""Occlusion masks: forward-backward flow consistency and the soft exponential mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .flow import FlowError, as_flow
from .frame import FrameError, as_frame, check_same_shape

DEFAULT_SHARPNESS = 50.0


@dataclass(frozen=True)
class ConsistencyConfig:
    """Thresholds for |fw + bw|^2 <= alpha * (|fw|^2 + |bw|^2) + beta."""

    alpha: float = 0.01
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("consistency thresholds must be non-negative")


def fb_consistency_mask(flow_fw, flow_bw, cfg: ConsistencyConfig | None = None) -> np.ndarray:
    """Binary (H, W) mask: 1 where the forward and backward flows agree.

    The backward flow is sampled bilinearly at p + fw(p). Pixels whose forward
    target leaves the frame are marked occluded.
    """
    cfg = cfg or ConsistencyConfig()
    fw = as_flow(flow_fw, "forward flow")
    bw = as_flow(flow_bw, "backward flow")
    if fw.shape != bw.shape:
        raise FlowError(f"dimension mismatch: forward {fw.shape} vs backward {bw.shape}")
    h, w, _ = fw.shape
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    tx = jj + fw[..., 0]
    ty = ii + fw[..., 1]
    inside = (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
    bw_at = kernels.warp_gather(bw, fw)
    residual = np.sum((fw + bw_at) ** 2, axis=-1)
    bound = cfg.alpha * (np.sum(fw**2, axis=-1) + np.sum(bw_at**2, axis=-1)) + cfg.beta
    return ((residual <= bound) & inside).astype(np.float64)


def soft_mask(i_t, i_next_warped, sharpness: float = DEFAULT_SHARPNESS) -> np.ndarray:
    """exp(-sharpness * d^2) as an (H, W) array, d^2 the channel-mean squared difference."""
    if not sharpness > 0:
        raise ValueError(f"sharpness must be positive, got {sharpness}")
    a = as_frame(i_t, "i_t")
    b = as_frame(i_next_warped, "i_next_warped")
    check_same_shape(("i_t", a), ("i_next_warped", b))
    d2 = np.mean((a - b) ** 2, axis=-1)
    return np.exp(-sharpness * d2)


def as_mask(data, shape: tuple[int, int], name: str = "mask") -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[..., 0]
    if m.shape != tuple(shape):
        raise FrameError(f"dimension mismatch: {name} {m.shape} vs frame {tuple(shape)}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise FrameError(f"{name}: weights must be finite and non-negative")
    return m
