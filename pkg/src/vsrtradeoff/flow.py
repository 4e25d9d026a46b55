"""Optical-flow fields, the Middlebury ``.flo`` codec and backward warping.

A flow field is a float64 (H, W, 2) array holding (u, v) = (dx, dy) in pixels,
stored at the target pixel p and pointing at the source position p + F(p) in
the next frame.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import kernels
from .frame import FrameError, as_frame

FLO_MAGIC = 202021.25
MAX_MAGNITUDE = 1e9
_HEADER = struct.Struct("<fii")


class FlowError(ValueError):
    pass


def as_flow(data, name: str = "flow") -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FlowError(f"{name}: expected (H, W, 2) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FlowError(f"{name}: non-finite components")
    if np.any(np.abs(arr) > MAX_MAGNITUDE):
        raise FlowError(f"{name}: components above {MAX_MAGNITUDE:g} (unknown-flow sentinel?)")
    return arr


def read_flo(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FlowError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, width, height = _HEADER.unpack_from(raw)
    if magic != FLO_MAGIC:
        raise FlowError(f"{path}: bad magic {magic!r}")
    if width <= 0 or height <= 0:
        raise FlowError(f"{path}: non-positive dimensions {width}x{height}")
    expected = _HEADER.size + width * height * 2 * 4
    if len(raw) < expected:
        raise FlowError(f"{path}: truncated payload ({len(raw)} of {expected} bytes)")
    data = np.frombuffer(raw, dtype="<f4", count=width * height * 2, offset=_HEADER.size)
    return as_flow(data.reshape(height, width, 2).astype(np.float64), str(path))


def write_flo(flow, path) -> None:
    """Write ``flow`` as float32 ``.flo``. Values are rounded to float32."""
    flow = as_flow(flow)
    h, w, _ = flow.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FLO_MAGIC, w, h))
        fh.write(flow.astype("<f4").tobytes())


def synth_translation_flow(width: int, height: int, dx: float, dy: float) -> np.ndarray:
    if not (np.isfinite(dx) and np.isfinite(dy)):
        raise FlowError("translation must be finite")
    out = np.empty((height, width, 2))
    out[..., 0] = dx
    out[..., 1] = dy
    return out


def _check(f, flow, name):
    f = as_frame(f, name)
    flow = as_flow(flow)
    if f.shape[:2] != flow.shape[:2]:
        raise FrameError(f"dimension mismatch: {name} {f.shape[:2]} vs flow {flow.shape[:2]}")
    return f, flow


def warp_backward(f, flow) -> np.ndarray:
    """Sample ``f`` at p + flow(p) with bilinear interpolation and edge clamp."""
    f, flow = _check(f, flow, "frame")
    return kernels.warp_gather(f, flow)


def warp_adjoint(g, flow) -> np.ndarray:
    """Transpose of :func:`warp_backward` with respect to its frame argument."""
    g, flow = _check(g, flow, "gradient")
    return kernels.warp_scatter(g, flow)
