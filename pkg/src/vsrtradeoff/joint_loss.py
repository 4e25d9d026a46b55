"""Joint spatial-temporal loss over a pair of super-resolved frames.

    L = alpha * ||sr_t - hr_t||_F^2 + alpha * ||sr_next - hr_next||_F^2
        + beta * sum_p M(p) * ||sr_t(p) - warp(sr_next)(p)||^2

with M = exp(-sharpness * d^2) computed from the HR pair, so the loss is a
quadratic in the SR pixels and its gradient is exact.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .flow import as_flow
from .frame import FrameError, as_frame, check_same_shape
from .masks import DEFAULT_SHARPNESS, soft_mask

log = logging.getLogger(__name__)

STEP_RULES = ("bb", "fixed")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5
    beta: float = 0.0
    mask_sharpness: float = DEFAULT_SHARPNESS
    normalize_temporal: bool = False
    step_size: float = 1.0
    step_rule: str = "bb"
    max_iters: int = 20000
    grad_tol: float = 1e-9
    armijo_c: float = 1e-4
    shrink: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both be zero")
        if not self.mask_sharpness > 0:
            raise ValueError("mask_sharpness must be positive")
        if not self.step_size > 0 or not self.grad_tol > 0 or self.max_iters < 1:
            raise ValueError("step_size, grad_tol and max_iters must be positive")
        if not 0 < self.shrink < 1 or not 0 < self.armijo_c < 1:
            raise ValueError("shrink and armijo_c must lie in (0, 1)")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    spatial_t: float
    spatial_next: float
    temporal: float


class _Objective:
    """The loss with its soft mask frozen for one (hr_t, hr_next, flow) instance."""

    def __init__(self, hr_t, hr_next, flow, cfg: LossConfig):
        self.hr_t = as_frame(hr_t, "hr_t")
        self.hr_next = as_frame(hr_next, "hr_next")
        check_same_shape(("hr_t", self.hr_t), ("hr_next", self.hr_next))
        self.flow = as_flow(flow)
        if self.flow.shape[:2] != self.hr_t.shape[:2]:
            raise FrameError(f"dimension mismatch: frames {self.hr_t.shape[:2]} vs flow {self.flow.shape[:2]}")
        self.cfg = cfg
        hr_warped = kernels.warp_gather(self.hr_next, self.flow)
        self.mask = soft_mask(self.hr_t, hr_warped, cfg.mask_sharpness)[..., None]
        self.temporal_scale = 1.0
        if cfg.normalize_temporal:
            total = float(self.mask.sum())
            if total == 0.0:
                raise FrameError("soft mask sums to zero; normalised temporal term undefined")
            self.temporal_scale = 1.0 / total

    def check(self, sr_t, sr_next):
        sr_t = as_frame(sr_t, "sr_t")
        sr_next = as_frame(sr_next, "sr_next")
        check_same_shape(("hr_t", self.hr_t), ("sr_t", sr_t), ("sr_next", sr_next))
        return sr_t, sr_next

    def breakdown(self, sr_t, sr_next) -> LossBreakdown:
        cfg = self.cfg
        r = sr_t - kernels.warp_gather(sr_next, self.flow)
        # overflow shows up as a non-finite total, which callers check
        with np.errstate(over="ignore", invalid="ignore"):
            s_t = float(np.sum((sr_t - self.hr_t) ** 2))
            s_n = float(np.sum((sr_next - self.hr_next) ** 2))
            temporal = self.temporal_scale * float(np.sum(self.mask * r * r))
        total = cfg.alpha * s_t + cfg.alpha * s_n + cfg.beta * temporal
        return LossBreakdown(total, s_t, s_n, temporal)

    def gradient(self, sr_t, sr_next):
        cfg = self.cfg
        r = sr_t - kernels.warp_gather(sr_next, self.flow)
        mr = (2.0 * cfg.beta * self.temporal_scale) * (self.mask * r)
        g_t = 2.0 * cfg.alpha * (sr_t - self.hr_t) + mr
        g_n = 2.0 * cfg.alpha * (sr_next - self.hr_next) - kernels.warp_scatter(mr, self.flow)
        return g_t, g_n


def joint_loss(sr_t, sr_next, hr_t, hr_next, flow, cfg: LossConfig) -> LossBreakdown:
    obj = _Objective(hr_t, hr_next, flow, cfg)
    return obj.breakdown(*obj.check(sr_t, sr_next))


def joint_loss_grad(sr_t, sr_next, hr_t, hr_next, flow, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`joint_loss` with respect to ``sr_t`` and ``sr_next``."""
    obj = _Objective(hr_t, hr_next, flow, cfg)
    return obj.gradient(*obj.check(sr_t, sr_next))


@dataclass
class MinimizeResult:
    sr_t: np.ndarray
    sr_next: np.ndarray
    history: list[LossBreakdown] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    grad_norm: float = float("inf")

    @property
    def trace(self) -> list[float]:
        return [b.total for b in self.history]



TRACE_COLUMNS = ("iteration", "total", "spatial_t", "spatial_next", "temporal")


def write_trace_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for i, b in enumerate(history):
            writer.writerow([i, repr(b.total), repr(b.spatial_t), repr(b.spatial_next), repr(b.temporal)])


def minimize(hr_t, hr_next, flow, init_t, init_next, cfg: LossConfig) -> MinimizeResult:
    """Steepest descent with Armijo backtracking on the SR pixels.

    The first trial step of each iteration is ``cfg.step_size`` (``step_rule="fixed"``)
    or the Barzilai-Borwein step from the previous iterate (``"bb"``). Accepted
    iterates never increase the loss. Outputs are not clamped.
    """
    obj = _Objective(hr_t, hr_next, flow, cfg)
    x_t, x_n = obj.check(init_t, init_next)
    x_t, x_n = x_t.copy(), x_n.copy()
    cur = obj.breakdown(x_t, x_n)
    if not np.isfinite(cur.total):
        raise FloatingPointError("loss is not finite at the initial point")
    result = MinimizeResult(x_t, x_n, [cur])
    g_t, g_n = obj.gradient(x_t, x_n)
    prev = None
    for it in range(cfg.max_iters):
        gmax = max(np.max(np.abs(g_t)), np.max(np.abs(g_n)))
        result.grad_norm = float(gmax)
        if gmax < cfg.grad_tol:
            result.converged = True
            break
        gg = float(np.sum(g_t * g_t) + np.sum(g_n * g_n))
        step = cfg.step_size
        if cfg.step_rule == "bb" and prev is not None:
            s_t, s_n, y_t, y_n = prev
            sy = float(np.sum(s_t * y_t) + np.sum(s_n * y_n))
            if sy > 0:
                step = float(np.sum(s_t * s_t) + np.sum(s_n * s_n)) / sy
        saw_nonfinite = False
        for _ in range(80):
            n_t = x_t - step * g_t
            n_n = x_n - step * g_n
            trial = obj.breakdown(n_t, n_n)
            if not np.isfinite(trial.total):
                saw_nonfinite = True
            elif trial.total <= cur.total - cfg.armijo_c * step * gg:
                break
            step *= cfg.shrink
        else:
            if saw_nonfinite:
                raise FloatingPointError("non-finite loss during line search; step configuration diverges")
            log.debug("line search stalled at iteration %d (|g|=%.3g)", it, gmax)
            break
        ng_t, ng_n = obj.gradient(n_t, n_n)
        prev = (n_t - x_t, n_n - x_n, ng_t - g_t, ng_n - g_n)
        x_t, x_n, g_t, g_n, cur = n_t, n_n, ng_t, ng_n, trial
        result.history.append(cur)
        result.iterations = it + 1
    result.sr_t, result.sr_next = x_t, x_n
    result.grad_norm = float(max(np.max(np.abs(g_t)), np.max(np.abs(g_n))))
    return result
