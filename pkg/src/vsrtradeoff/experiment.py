"""Beta sweep over the joint loss, synthetic corpus and batch method evaluation."""

from __future__ import annotations

import configparser
import csv
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .flow import as_flow, read_flo, synth_translation_flow, write_flo
from .frame import (
    FrameError,
    as_frame,
    check_same_shape,
    degrade_x4,
    list_frame_files,
    load_video,
    save_video,
    to_luma,
)
from .joint_loss import LossConfig, minimize
from .masks import ConsistencyConfig, fb_consistency_mask
from .metrics import (
    MetricReport,
    ZeroMaskError,
    aggregate_dataset,
    mse,
    ssim,
    video_spatial_metrics,
    warping_error_pair,
    warping_error_video,
)

log = logging.getLogger(__name__)

DEFAULT_BETAS = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)
ENV_THREADS = "VSRTRADEOFF_THREADS"
REFERENCE_METHOD = "HR"
CURVE_COLUMNS = ("beta", "mse", "one_minus_ssim", "warping_error", "spatial_loss", "temporal_loss")
CSV_COLUMNS = ("method", "video", "mse", "ssim", "one_minus_ssim", "warping_error")


class DegeneratePairWarning(UserWarning):
    pass


def resolve_threads(threads: int | None = None) -> int:
    """0 or None means: $VSRTRADEOFF_THREADS, else os.cpu_count()."""
    if threads is None or threads == 0:
        env = os.environ.get(ENV_THREADS, "").strip()
        threads = int(env) if env else 0
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Map preserving input order; parallel when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# tradeoff curve

@dataclass(frozen=True)
class CurvePoint:
    beta: float
    mse: float
    one_minus_ssim: float
    warping_error: float
    spatial_loss: float
    temporal_loss: float
    iterations: int = 0
    converged: bool = True

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in CURVE_COLUMNS)


@dataclass
class TradeoffCurve:
    points: list[CurvePoint]
    hr_warping_error: float
    degenerate: bool = False
    traces: list = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])


def pair_warping_error(a, b, flow) -> float:
    """Full-mask, channel-mean normalised warping error of one frame pair."""
    a = as_frame(a)
    return warping_error_pair(a, b, flow, np.ones(a.shape[:2])).normalized


def check_betas(betas: Iterable[float]) -> list[float]:
    """Return ``betas`` as floats; they must be non-negative and strictly increasing."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("empty beta list")
    if any(not np.isfinite(b) or b < 0 for b in betas) or any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
        raise ValueError(f"betas must be non-negative and strictly increasing: {betas}")
    return betas


def beta_sweep(hr_t, hr_next, flow, betas: Iterable[float] = DEFAULT_BETAS,
               cfg: LossConfig | None = None, init=None, threads: int = 1) -> TradeoffCurve:
    """Minimise the joint loss once per beta from a shared initialisation.

    ``init`` defaults to the bicubic x4 degradation of each HR frame.
    """
    cfg = cfg or LossConfig()
    hr_t = as_frame(hr_t, "hr_t")
    hr_next = as_frame(hr_next, "hr_next")
    check_same_shape(("hr_t", hr_t), ("hr_next", hr_next))
    flow = as_flow(flow)
    betas = check_betas(betas)
    if init is None:
        init = (degrade_x4(hr_t), degrade_x4(hr_next))
    init_t, init_next = as_frame(init[0], "init_t"), as_frame(init[1], "init_next")

    hr_we = pair_warping_error(hr_t, hr_next, flow)
    degenerate = hr_we == 0.0
    if degenerate:
        warnings.warn("HR pair has zero warping error; the tradeoff is degenerate", DegeneratePairWarning)

    hr_luma = to_luma(hr_t)

    def run(beta: float):
        run_cfg = LossConfig(**{**asdict(cfg), "beta": beta})
        res = minimize(hr_t, hr_next, flow, init_t, init_next, run_cfg)
        if not res.converged:
            log.warning("beta=%g stopped after %d iterations (|g|=%.3g)", beta, res.iterations, res.grad_norm)
        last = res.history[-1]
        point = CurvePoint(
            beta=beta,
            mse=mse(res.sr_t, hr_t),
            one_minus_ssim=1.0 - ssim(to_luma(res.sr_t), hr_luma),
            warping_error=pair_warping_error(res.sr_t, res.sr_next, flow),
            spatial_loss=last.spatial_t + last.spatial_next,
            temporal_loss=last.temporal,
            iterations=res.iterations,
            converged=res.converged,
        )
        return point, res.history

    done = _ordered_map(run, betas, threads)
    return TradeoffCurve(
        points=[p for p, _ in done],
        hr_warping_error=hr_we,
        degenerate=degenerate,
        traces=[h for _, h in done],
    )


@dataclass(frozen=True)
class MonotonicityCheck:
    warping_error_ok: bool
    mse_ok: bool
    one_minus_ssim_ok: bool
    messages: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.warping_error_ok and self.mse_ok and self.one_minus_ssim_ok


def check_monotone(curve: TradeoffCurve, rel_slack: float = 1e-6) -> MonotonicityCheck:
    """Warping error must not increase with beta; MSE and 1-SSIM must not decrease."""
    msgs = []

    def ok(name: str, direction: int) -> bool:
        col = curve.column(name)
        eps = rel_slack * float(np.max(np.abs(col))) if col.size else 0.0
        good = True
        for i in range(col.size - 1):
            step = (col[i + 1] - col[i]) * direction
            if step < -eps:
                good = False
                msgs.append(f"{name}: beta {curve.points[i].beta:g} -> {curve.points[i + 1].beta:g} "
                            f"goes {col[i]:.9g} -> {col[i + 1]:.9g}")
        return good

    return MonotonicityCheck(ok("warping_error", -1), ok("mse", +1), ok("one_minus_ssim", +1), tuple(msgs))


def emit_gnuplot_data(curve: TradeoffCurve, path) -> None:
    if not curve.points:
        raise ValueError("empty curve")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + " ".join(CURVE_COLUMNS)]
    for p in curve.points:
        lines.append(" ".join(f"{v:.9g}" for v in p.row()))
    path.write_text("\n".join(lines) + "\n")


def read_gnuplot_data(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class CorpusSpec:
    videos: int = 2
    frames: int = 4
    height: int = 48
    width: int = 48
    hr_noise: float = 0.01
    method_noise: float = 0.02
    shift: int = 4
    seed: int = 0


def smooth_texture(rng: np.random.Generator, h: int, w: int, channels: int = 3) -> np.ndarray:
    """Band-limited random texture in roughly [0.1, 0.9], periodic in both axes."""
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w, channels))
    for c in range(channels):
        acc = np.zeros((h, w))
        for _ in range(6):
            kx, ky = rng.integers(1, 9, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (kx * xx / w + ky * yy / h) + phase)
        acc = acc / np.max(np.abs(acc))
        img[..., c] = 0.5 + 0.4 * acc
    return img


def _bounded_noise(rng, sigma, shape, k=2.5):
    return np.clip(rng.normal(0.0, sigma, shape), -k * sigma, k * sigma)


def make_corpus(spec: CorpusSpec = CorpusSpec()) -> dict:
    """Build HR videos, exact flows and four synthetic SR "methods".

    Returns ``{"hr": {video: array}, "flows": {video: (fw list, bw list)},
    "methods": {name: {video: array}}}``. Even-numbered videos are static with
    small per-frame HR noise; odd ones translate a periodic texture by
    ``shift`` pixels per frame.

    Methods: ``identity`` (HR itself), ``noise_fixed`` (one noise field added to
    every frame), ``noise_indep`` (a different spatial permutation of that same
    field per frame, so per-frame MSE matches ``noise_fixed``) and ``bicubic``.
    Noise is bounded so sums stay inside [0, 1] and no clipping occurs.
    """
    rng = np.random.default_rng(spec.seed)
    hr, flows = {}, {}
    h, w, t_len = spec.height, spec.width, spec.frames
    for v in range(spec.videos):
        name = f"{'static' if v % 2 == 0 else 'translate'}_{v:02d}"
        tex = smooth_texture(rng, h, w)
        if v % 2 == 0:
            frames = [tex + _bounded_noise(rng, spec.hr_noise, tex.shape) for _ in range(t_len)]
            dx = 0
        else:
            dx = spec.shift
            frames = [np.roll(tex, t * dx, axis=1) for t in range(t_len)]
        hr[name] = np.clip(np.stack(frames), 0, 1)
        fw = [synth_translation_flow(w, h, dx, 0) for _ in range(t_len - 1)]
        bw = [synth_translation_flow(w, h, -dx, 0) for _ in range(t_len - 1)]
        flows[name] = (fw, bw)

    methods = {"identity": {}, "noise_fixed": {}, "noise_indep": {}, "bicubic": {}}
    for name, video in hr.items():
        field_ = _bounded_noise(rng, spec.method_noise, video.shape[1:])
        perms = [rng.permutation(h * w) for _ in range(t_len)]
        flat = field_.reshape(h * w, -1)
        indep = np.stack([flat[p].reshape(field_.shape) for p in perms])
        methods["identity"][name] = video.copy()
        methods["noise_fixed"][name] = np.clip(video + field_[None], 0, 1)
        methods["noise_indep"][name] = np.clip(video + indep, 0, 1)
        methods["bicubic"][name] = np.stack([degrade_x4(f) for f in video])
    return {"hr": hr, "flows": flows, "methods": methods}


def write_corpus(root, spec: CorpusSpec = CorpusSpec()) -> Path:
    """Write a synthetic corpus plus a ready-to-run ``manifest.ini`` under ``root``."""
    root = Path(root)
    corpus = make_corpus(spec)
    for name, video in corpus["hr"].items():
        save_video(video, root / "hr" / name)
        fw, bw = corpus["flows"][name]
        for t, (f, b) in enumerate(zip(fw, bw)):
            write_flo(f, root / "flows" / name / "forward" / f"{t:06d}.flo")
            write_flo(b, root / "flows" / name / "backward" / f"{t:06d}.flo")
    for method, videos in corpus["methods"].items():
        for name, video in videos.items():
            save_video(video, root / "methods" / method / name)
    cp = configparser.ConfigParser()
    cp["paths"] = {"hr_root": "hr", "flow_root": "flows", "output_dir": "results"}
    cp["methods"] = {m: f"methods/{m}" for m in corpus["methods"]}
    cp["mask"] = {"mode": "fb", "fb_alpha": "0.01", "fb_beta": "0.5"}
    cp["metrics"] = {"channels": "mean"}
    with open(root / "manifest.ini", "w") as fh:
        cp.write(fh)
    return root / "manifest.ini"


# ---------------------------------------------------------------------------
# batch evaluation

@dataclass
class EvalManifest:
    hr_root: Path
    methods: dict[str, Path]
    flow_root: Path
    output_dir: Path
    mask_mode: str = "fb"
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    channels: str = "mean"

    @classmethod
    def from_file(cls, path) -> "EvalManifest":
        path = Path(path)
        cp = configparser.ConfigParser()
        cp.optionxform = str  # method names are case-sensitive
        if not cp.read(path):
            raise FileNotFoundError(f"{path}: cannot read manifest")
        base = path.parent

        def rel(p: str) -> Path:
            q = Path(p).expanduser()
            return q if q.is_absolute() else base / q

        try:
            paths = cp["paths"]
            methods = {k: rel(v) for k, v in cp["methods"].items()}
            hr_root, flow_root = rel(paths["hr_root"]), rel(paths["flow_root"])
        except KeyError as exc:
            raise ValueError(f"{path}: missing manifest entry {exc}") from exc
        mask = cp["mask"] if cp.has_section("mask") else {}
        metrics = cp["metrics"] if cp.has_section("metrics") else {}
        manifest = cls(
            hr_root=hr_root,
            methods=methods,
            flow_root=flow_root,
            output_dir=rel(paths.get("output_dir", "results")),
            mask_mode=mask.get("mode", "fb"),
            consistency=ConsistencyConfig(float(mask.get("fb_alpha", 0.01)), float(mask.get("fb_beta", 0.5))),
            channels=metrics.get("channels", "mean"),
        )
        manifest.validate()
        return manifest

    def validate(self) -> None:
        if self.mask_mode not in ("fb", "full"):
            raise ValueError(f"mask mode must be 'fb' or 'full', got {self.mask_mode!r}")
        if not self.methods:
            raise ValueError("manifest lists no methods")
        if REFERENCE_METHOD in self.methods:
            raise ValueError(f"method name {REFERENCE_METHOD!r} is reserved for the HR reference")
        if not self.hr_root.is_dir():
            raise FileNotFoundError(f"{self.hr_root}: HR root is not a directory")
        for name, root in self.methods.items():
            if not root.is_dir():
                raise FileNotFoundError(f"{root}: directory for method {name!r} does not exist")

    def videos(self) -> list[str]:
        return sorted(p.name for p in self.hr_root.iterdir() if p.is_dir())


@dataclass
class EvalResult:
    reports: list[MetricReport]
    summary: dict
    errors: list[str]


def _load_flows(manifest: EvalManifest, video: str, n_pairs: int, shape):
    fw_dir = manifest.flow_root / video / "forward"
    bw_dir = manifest.flow_root / video / "backward"
    fws, masks = [], []
    for t in range(n_pairs):
        fw = read_flo(fw_dir / f"{t:06d}.flo")
        if fw.shape[:2] != shape:
            raise FrameError(f"{video}: flow {t} is {fw.shape[:2]}, frames are {shape}")
        if manifest.mask_mode == "fb":
            bw = read_flo(bw_dir / f"{t:06d}.flo")
            masks.append(fb_consistency_mask(fw, bw, manifest.consistency))
        else:
            masks.append(np.ones(shape))
        fws.append(fw)
    return fws, masks


def evaluate_methods(manifest: EvalManifest, threads: int = 1) -> EvalResult:
    """Score every method against HR; per-video failures are collected, not raised."""
    videos = manifest.videos()
    if not videos:
        raise FrameError(f"{manifest.hr_root}: no video directories")
    errors: list[str] = []
    prepared = {}

    def prepare(video: str):
        try:
            hr = load_video(manifest.hr_root / video)
            if hr.shape[0] < 2:
                raise FrameError(f"{video}: need at least two frames")
            fws, masks = _load_flows(manifest, video, hr.shape[0] - 1, hr.shape[1:3])
            hr_we = warping_error_video(hr, fws, masks, manifest.channels)
            return video, (hr, fws, masks, hr_we), None
        except (OSError, ValueError) as exc:
            return video, None, f"{video}: {exc}"

    for video, data, err in _ordered_map(prepare, videos, threads):
        if err:
            errors.append(f"{REFERENCE_METHOD}/{err}")
        else:
            prepared[video] = data

    jobs = [(m, v) for m in manifest.methods for v in videos if v in prepared]

    def score(job):
        method, video = job
        hr, fws, masks, _ = prepared[video]
        try:
            frames_dir = manifest.methods[method] / video
            if len(list_frame_files(frames_dir)) != hr.shape[0]:
                raise FrameError(f"{frames_dir}: frame count differs from HR ({hr.shape[0]})")
            sr = load_video(frames_dir)
            m, s = video_spatial_metrics(hr, sr)
            we = warping_error_video(sr, fws, masks, manifest.channels)
            return MetricReport(method, video, m, s, we), None
        except ZeroMaskError as exc:
            return None, f"{method}/{video}: {exc}"
        except (OSError, ValueError) as exc:
            return None, f"{method}/{video}: {exc}"

    reports = [
        MetricReport(REFERENCE_METHOD, v, 0.0, 1.0, prepared[v][3]) for v in videos if v in prepared
    ]
    for rep, err in _ordered_map(score, jobs, threads):
        if err:
            errors.append(err)
        else:
            reports.append(rep)
    summary = {k: v.as_dict() for k, v in aggregate_dataset(reports).items()} if reports else {}
    return EvalResult(reports=reports, summary=summary, errors=errors)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_eval_outputs(result: EvalResult, output_dir) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "per_video.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in result.reports:
            writer.writerow([r.method, r.video, _fmt(r.mse), _fmt(r.ssim), _fmt(r.one_minus_ssim),
                             _fmt(r.warping_error)])
    written.append(path)

    path = out / "summary.json"
    payload = {"methods": result.summary, "errors": result.errors}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(path)

    for spatial in ("mse", "one_minus_ssim"):
        path = out / f"scatter_{spatial}_warping_error.dat"
        names = list(result.summary)
        lines = [f"# {spatial} warping_error; rows: {' '.join(names)}"]
        for name in names:
            s = result.summary[name]
            lines.append(f"{s[spatial]:.9g} {s['warping_error']:.9g}")
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


def read_per_video_csv(path) -> list[MetricReport]:
    with open(path, newline="") as fh:
        return [
            MetricReport(row["method"], row["video"], float(row["mse"]), float(row["ssim"]),
                         float(row["warping_error"]))
            for row in csv.DictReader(fh)
        ]


def noisy_static_pair(size: int = 48, hr_noise: float = 0.02, seed: int = 0):
    """HR frame pair of a static textured scene with independent per-frame noise."""
    rng = np.random.default_rng(seed)
    tex = smooth_texture(rng, size, size)
    a = np.clip(tex + rng.normal(0.0, hr_noise, tex.shape), 0, 1)
    b = np.clip(tex + rng.normal(0.0, hr_noise, tex.shape), 0, 1)
    return a, b, synth_translation_flow(size, size, 0.0, 0.0)

