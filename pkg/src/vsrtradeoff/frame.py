"""Frames, PNG I/O, luma conversion and bicubic resampling.

Frames are plain float64 arrays of shape (H, W, C) with C in {1, 3} and samples
nominally in [0, 1]. A video is a (T, H, W, C) array or a sequence of frames.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import kernels

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
CUBIC_A = -0.5
FRAME_PATTERN = "{:06d}.png"
_FRAME_NAME = re.compile(r"^(\d+)\.png$")


class FrameError(ValueError):
    """Raised for malformed frames, unreadable images and shape mismatches."""


def as_frame(data, name: str = "frame") -> np.ndarray:
    """Validate ``data`` and return it as a float64 (H, W, C) array.

    A 2-D array is treated as single-channel. Samples must be finite; the
    [0, 1] range is not enforced because optimiser iterates may leave it.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise FrameError(f"{name}: expected (H, W) or (H, W, 1|3) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FrameError(f"{name}: empty frame {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FrameError(f"{name}: non-finite samples")
    return arr


def as_video(frames, name: str = "video") -> np.ndarray:
    """Stack a sequence of equally sized frames into a (T, H, W, C) array."""
    seq = list(frames)
    if not seq:
        raise FrameError(f"{name}: no frames")
    out = [as_frame(f, f"{name}[{t}]") for t, f in enumerate(seq)]
    shape = out[0].shape
    for t, f in enumerate(out):
        if f.shape != shape:
            raise FrameError(f"{name}[{t}]: shape {f.shape} differs from {shape}")
    return np.stack(out)


def check_same_shape(*pairs: tuple[str, np.ndarray]) -> None:
    ref_name, ref = pairs[0]
    for name, arr in pairs[1:]:
        if arr.shape != ref.shape:
            raise FrameError(f"dimension mismatch: {ref_name} {ref.shape} vs {name} {arr.shape}")


def clamp(f: np.ndarray) -> np.ndarray:
    return np.clip(f, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PNG I/O

def load_frame(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[..., None]
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                raise FrameError(f"{path}: unsupported image mode {mode!r} (need 8-bit L or RGB)")
    except FrameError:
        raise
    except (OSError, ValueError) as exc:
        raise FrameError(f"{path}: cannot read image ({exc})") from exc
    return arr.astype(np.float64) / 255.0


def to_uint8(f: np.ndarray) -> np.ndarray:
    f = as_frame(f)
    return np.floor(clamp(f) * 255.0 + 0.5).astype(np.uint8)


def save_frame(f: np.ndarray, path) -> None:
    """Write a frame as 8-bit PNG; samples are clamped and rounded to nearest."""
    q = to_uint8(f)
    img = Image.fromarray(q[..., 0], mode="L") if q.shape[2] == 1 else Image.fromarray(q, mode="RGB")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def list_frame_files(directory) -> list[Path]:
    """Numerically ordered ``%06d.png`` files in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameError(f"{directory}: not a directory")
    found = []
    for p in directory.iterdir():
        m = _FRAME_NAME.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    found.sort()
    return [p for _, p in found]


def load_video(directory) -> np.ndarray:
    files = list_frame_files(directory)
    if not files:
        raise FrameError(f"{directory}: no frames matching %06d.png")
    return as_video([load_frame(p) for p in files], name=str(directory))


def save_video(video, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(video):
        save_frame(f, directory / FRAME_PATTERN.format(t))


# ---------------------------------------------------------------------------
# colour

def rgb_to_luma(f: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB frame, returned as (H, W, 1) and clamped to [0, 1]."""
    f = as_frame(f)
    if f.shape[2] != 3:
        raise FrameError(f"rgb_to_luma needs 3 channels, got {f.shape[2]}")
    y = f[..., 0] * LUMA_WEIGHTS[0] + f[..., 1] * LUMA_WEIGHTS[1] + f[..., 2] * LUMA_WEIGHTS[2]
    return clamp(y)[..., None]


def to_luma(f: np.ndarray) -> np.ndarray:
    """Luma for RGB frames, passthrough for single-channel ones."""
    f = as_frame(f)
    return f if f.shape[2] == 1 else rgb_to_luma(f)


# ---------------------------------------------------------------------------
# bicubic resampling

def cubic_kernel(x, a: float = CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _round_half_up(x) -> int:
    return int(math.floor(x + Fraction(1, 2))) if isinstance(x, Fraction) else int(math.floor(x + 0.5))


def resize_taps(n_in: int, n_out: int, scale) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and normalised weights mapping ``n_in`` samples to ``n_out``.

    Output centre o sits at input coordinate (o + 0.5) / scale - 0.5. When
    minifying the kernel is stretched by 1 / scale. Out-of-range taps are
    clamped to the edge sample.
    """
    s = float(scale)
    stretch = 1.0 / s if s < 1.0 else 1.0
    support = 2.0 * stretch
    centres = (np.arange(n_out, dtype=np.float64) + 0.5) / s - 0.5
    ntaps = int(math.ceil(2.0 * support)) + 1
    first = np.floor(centres - support).astype(np.intp) + 1
    offsets = np.arange(ntaps)
    pos = first[:, None] + offsets[None, :]
    wts = cubic_kernel((centres[:, None] - pos) / stretch)
    wts = wts / wts.sum(axis=1, keepdims=True)
    idx = np.clip(pos, 0, n_in - 1)
    return idx.astype(np.intp), wts


def bicubic_resize(f: np.ndarray, scale) -> np.ndarray:
    """Separable Catmull-Rom resize by ``scale`` (a positive rational), clamped to [0, 1]."""
    f = as_frame(f)
    if isinstance(scale, (int, Fraction)):
        scale = Fraction(scale)
    if not scale > 0:
        raise FrameError(f"scale must be positive, got {scale}")
    h, w, _ = f.shape
    out_h = _round_half_up(h * scale)
    out_w = _round_half_up(w * scale)
    if out_h < 1 or out_w < 1:
        raise FrameError(f"resize of {h}x{w} by {scale} gives degenerate size {out_h}x{out_w}")
    if scale == 1:
        return f.copy()
    idx, wts = resize_taps(h, out_h, scale)
    tmp = kernels.resample_axis0(f, idx, wts)
    idx, wts = resize_taps(w, out_w, scale)
    out = kernels.resample_axis0(tmp.transpose(1, 0, 2), idx, wts).transpose(1, 0, 2)
    return clamp(np.ascontiguousarray(out))


def _fit(f: np.ndarray, h: int, w: int) -> np.ndarray:
    f = f[:h, :w]
    ph, pw = h - f.shape[0], w - f.shape[1]
    if ph or pw:
        f = np.pad(f, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return f


def degrade_x4(f: np.ndarray) -> np.ndarray:
    """Bicubic x4 down then x4 up: the bicubic super-resolution baseline."""
    f = as_frame(f)
    h, w, _ = f.shape
    if h < 4 or w < 4:
        raise FrameError(f"degrade_x4 needs at least 4x4, got {h}x{w}")
    low = bicubic_resize(f, Fraction(1, 4))
    return _fit(bicubic_resize(low, 4), h, w)


def degrade_video(video: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([degrade_x4(f) for f in video])
