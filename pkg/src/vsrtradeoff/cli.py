"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .flow import FlowError, read_flo, synth_translation_flow, warp_backward, write_flo
from .frame import FrameError, degrade_x4, list_frame_files, load_frame, load_video, save_frame, save_video
from .joint_loss import LossConfig, write_trace_csv
from .masks import DEFAULT_SHARPNESS, ConsistencyConfig, fb_consistency_mask, soft_mask
from .metrics import CHANNEL_REDUCTIONS, MetricReport, video_spatial_metrics, warping_error_video

log = logging.getLogger("vsrtradeoff")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    p.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")


def _add_fb(p: argparse.ArgumentParser) -> None:
    d = ConsistencyConfig()
    p.add_argument("--fb-alpha", type=float, default=d.alpha, help="relative forward-backward tolerance")
    p.add_argument("--fb-beta", type=float, default=d.beta, help="absolute forward-backward tolerance (px^2)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="vsrtradeoff", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("degrade", help="bicubic x4 down/up degradation", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="PNG file or %%06d.png frame directory")
    p.add_argument("--out", required=True, help="output PNG file or directory")
    _add_common(p)

    p = sub.add_parser("flow-synth", help="write a constant translation .flo", formatter_class=fmt)
    p.add_argument("--width", type=int, required=True, help="frame width in pixels")
    p.add_argument("--height", type=int, required=True, help="frame height in pixels")
    p.add_argument("--dx", type=float, default=0.0, help="horizontal displacement (px)")
    p.add_argument("--dy", type=float, default=0.0, help="vertical displacement (px)")
    p.add_argument("--out", required=True, help="output .flo path")
    _add_common(p)

    p = sub.add_parser("warp", help="backward-warp a frame along a flow", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="PNG frame (the next frame)")
    p.add_argument("--flow", required=True, help=".flo flow from the current to the next frame")
    p.add_argument("--out", required=True, help="output PNG")
    _add_common(p)

    p = sub.add_parser("mask", help="occlusion mask as PNG (binary fb-consistency or soft)", formatter_class=fmt)
    p.add_argument("--forward", help="forward .flo (binary mode)")
    p.add_argument("--backward", help="backward .flo (binary mode)")
    p.add_argument("--soft", action="store_true", help="soft exp(-s*d^2) mask from two HR frames")
    p.add_argument("--hr-t", help="HR frame t (soft mode)")
    p.add_argument("--hr-next", help="HR frame t+1 (soft mode)")
    p.add_argument("--flow", help="flow t -> t+1 (soft mode; zero flow if omitted)")
    p.add_argument("--sharpness", type=float, default=DEFAULT_SHARPNESS, help="soft mask decay rate")
    _add_fb(p)
    p.add_argument("--out", required=True, help="output PNG")
    _add_common(p)

    p = sub.add_parser("metrics", help="MSE, SSIM and warping error of one video", formatter_class=fmt)
    p.add_argument("--hr", required=True, help="HR frame directory")
    p.add_argument("--sr", required=True, help="SR frame directory")
    p.add_argument("--flows", help="directory with forward/ and backward/ .flo files; zero flow if omitted")
    p.add_argument("--mask", choices=("fb", "full"), default="fb", help="occlusion mask mode")
    p.add_argument("--channels", choices=CHANNEL_REDUCTIONS, default="mean", help="per-pixel channel reduction")
    p.add_argument("--method", default="sr", help="method name for the report row")
    p.add_argument("--out", help="CSV output (stdout if omitted)")
    _add_fb(p)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score all methods in a manifest", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="INI manifest")
    p.add_argument("--out", help="output directory (overrides the manifest)")
    p.add_argument("--threads", type=int, default=0, help=f"worker threads, 0 = ${ex.ENV_THREADS} or all cores")
    _add_common(p)

    p = sub.add_parser("tradeoff", help="beta sweep of the joint loss", formatter_class=fmt)
    src = p.add_argument_group("input (choose one)")
    src.add_argument("--hr-t", help="HR frame t")
    src.add_argument("--hr-next", help="HR frame t+1")
    src.add_argument("--flow", help="flow t -> t+1 (.flo); zero flow if omitted")
    src.add_argument("--video", help="HR frame directory; uses frames --frame and --frame+1")
    src.add_argument("--frame", type=int, default=0, help="index of frame t in --video")
    src.add_argument("--synthetic", action="store_true", help="generate a noisy static HR pair")
    src.add_argument("--size", type=int, default=48, help="synthetic frame size")
    src.add_argument("--hr-noise", type=float, default=0.02, help="synthetic per-frame HR noise sigma")
    src.add_argument("--seed", type=int, default=0, help="synthetic RNG seed")
    d = LossConfig()
    p.add_argument("--betas", type=_floats, default=list(ex.DEFAULT_BETAS), help="comma-separated, increasing")
    p.add_argument("--alpha", type=float, default=d.alpha, help="spatial weight")
    p.add_argument("--sharpness", type=float, default=d.mask_sharpness, help="soft mask decay rate")
    p.add_argument("--normalize-temporal", action="store_true", help="divide the temporal term by the mask sum")
    p.add_argument("--step-rule", choices=("bb", "fixed"), default=d.step_rule,
                   help="first trial step: Barzilai-Borwein or --step-size")
    p.add_argument("--step-size", type=float, default=d.step_size, help="first trial step for the fixed rule")
    p.add_argument("--max-iters", type=int, default=d.max_iters, help="iteration cap per beta")
    p.add_argument("--grad-tol", type=float, default=d.grad_tol, help="stop when the largest gradient entry falls below this")
    p.add_argument("--traces", action="store_true", help="also write trace_<i>.csv per beta")
    p.add_argument("--threads", type=int, default=0, help=f"worker threads, 0 = ${ex.ENV_THREADS} or all cores")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("synth-corpus", help="write the synthetic evaluation corpus", formatter_class=fmt)
    c = ex.CorpusSpec()
    p.add_argument("--out", required=True, help="corpus root directory")
    p.add_argument("--videos", type=int, default=c.videos, help="number of videos")
    p.add_argument("--frames", type=int, default=c.frames, help="frames per video")
    p.add_argument("--size", type=int, default=c.height, help="frame side length")
    p.add_argument("--hr-noise", type=float, default=c.hr_noise, help="per-frame HR noise sigma")
    p.add_argument("--method-noise", type=float, default=c.method_noise, help="noise sigma of the noisy methods")
    p.add_argument("--shift", type=int, default=c.shift, help="per-frame shift of translating videos (px)")
    p.add_argument("--seed", type=int, default=c.seed, help="RNG seed")
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        files = list_frame_files(src)
        if not files:
            raise FrameError(f"{src}: no frames")
        save_video([degrade_x4(load_frame(f)) for f in files], args.out)
    else:
        save_frame(degrade_x4(load_frame(src)), args.out)
    return EXIT_OK


def cmd_flow_synth(args) -> int:
    if args.width < 1 or args.height < 1:
        raise UsageError("--width and --height must be positive")
    write_flo(synth_translation_flow(args.width, args.height, args.dx, args.dy), args.out)
    return EXIT_OK


def cmd_warp(args) -> int:
    save_frame(warp_backward(load_frame(args.input), read_flo(args.flow)), args.out)
    return EXIT_OK


def cmd_mask(args) -> int:
    if args.soft:
        if args.forward or args.backward:
            raise UsageError("--soft cannot be combined with --forward/--backward")
        if not (args.hr_t and args.hr_next):
            raise UsageError("--soft needs --hr-t and --hr-next")
        a, b = load_frame(args.hr_t), load_frame(args.hr_next)
        flow = read_flo(args.flow) if args.flow else np.zeros(a.shape[:2] + (2,))
        m = soft_mask(a, warp_backward(b, flow), args.sharpness)
    else:
        if args.hr_t or args.hr_next:
            raise UsageError("--hr-t/--hr-next only apply with --soft")
        if not (args.forward and args.backward):
            raise UsageError("binary mask needs --forward and --backward")
        m = fb_consistency_mask(read_flo(args.forward), read_flo(args.backward),
                                ConsistencyConfig(args.fb_alpha, args.fb_beta))
    save_frame(m, args.out)
    return EXIT_OK


def _flows_for(flow_dir, n_pairs, shape, mode, consistency):
    if flow_dir is None:
        log.info("no --flows given: zero flow, full masks")
        zero = np.zeros(shape + (2,))
        return [zero] * n_pairs, [np.ones(shape)] * n_pairs
    flow_dir = Path(flow_dir)
    fws, masks = [], []
    for t in range(n_pairs):
        fw = read_flo(flow_dir / "forward" / f"{t:06d}.flo")
        fws.append(fw)
        if mode == "fb":
            bw = read_flo(flow_dir / "backward" / f"{t:06d}.flo")
            masks.append(fb_consistency_mask(fw, bw, consistency))
        else:
            masks.append(np.ones(shape))
    return fws, masks


def cmd_metrics(args) -> int:
    hr = load_video(args.hr)
    sr = load_video(args.sr)
    m, s = video_spatial_metrics(hr, sr)
    if hr.shape[0] >= 2:
        fws, masks = _flows_for(args.flows, hr.shape[0] - 1, hr.shape[1:3], args.mask,
                                ConsistencyConfig(args.fb_alpha, args.fb_beta))
        we = warping_error_video(sr, fws, masks, args.channels)
    else:
        log.warning("single-frame video: warping error undefined")
        we = float("nan")
    rep = MetricReport(args.method, Path(args.hr).name, m, s, we)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ex.CSV_COLUMNS)
        w.writerow([rep.method, rep.video, repr(rep.mse), repr(rep.ssim), repr(rep.one_minus_ssim),
                    repr(rep.warping_error)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = ex.EvalManifest.from_file(args.manifest)
    out = Path(args.out) if args.out else manifest.output_dir
    result = ex.evaluate_methods(manifest, threads=ex.resolve_threads(args.threads))
    for err in result.errors:
        log.error("%s", err)
    for path in ex.write_eval_outputs(result, out):
        log.info("wrote %s", path)
    for name, s in result.summary.items():
        log.info("%-12s mse=%.6g 1-ssim=%.6g warp=%.6g", name, s["mse"], s["one_minus_ssim"], s["warping_error"])
    return EXIT_DATA if result.errors else EXIT_OK


def _tradeoff_inputs(args):
    chosen = [bool(args.hr_t or args.hr_next), bool(args.video), args.synthetic]
    if sum(chosen) != 1:
        raise UsageError("choose exactly one input: --hr-t/--hr-next, --video or --synthetic")
    if args.synthetic:
        return ex.noisy_static_pair(args.size, args.hr_noise, args.seed)
    if args.video:
        files = list_frame_files(args.video)
        if args.frame < 0 or args.frame + 1 >= len(files):
            raise FrameError(f"{args.video}: frame {args.frame} has no successor ({len(files)} frames)")
        a, b = load_frame(files[args.frame]), load_frame(files[args.frame + 1])
    else:
        if not (args.hr_t and args.hr_next):
            raise UsageError("--hr-t and --hr-next go together")
        a, b = load_frame(args.hr_t), load_frame(args.hr_next)
    flow = read_flo(args.flow) if args.flow else np.zeros(a.shape[:2] + (2,))
    return a, b, flow


def cmd_tradeoff(args) -> int:
    try:
        betas = ex.check_betas(args.betas)
        # beta is set per sweep point; 1.0 only lets the remaining fields validate
        cfg = LossConfig(alpha=args.alpha, beta=1.0, mask_sharpness=args.sharpness,
                         normalize_temporal=args.normalize_temporal, step_size=args.step_size,
                         step_rule=args.step_rule, max_iters=args.max_iters, grad_tol=args.grad_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    hr_t, hr_next, flow = _tradeoff_inputs(args)
    curve = ex.beta_sweep(hr_t, hr_next, flow, betas, cfg, threads=ex.resolve_threads(args.threads))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ex.emit_gnuplot_data(curve, out / "tradeoff.dat")
    if args.traces:
        for i, history in enumerate(curve.traces):
            write_trace_csv(history, out / f"trace_{i:02d}.csv")
    check = ex.check_monotone(curve)
    for msg in check.messages:
        log.error("%s", msg)
    if curve.degenerate:
        print("FAIL (degenerate HR pair: zero warping error)")
        return EXIT_DATA
    print("PASS" if check.passed else "FAIL")
    return EXIT_OK if check.passed else EXIT_DATA


def cmd_synth_corpus(args) -> int:
    spec = ex.CorpusSpec(videos=args.videos, frames=args.frames, height=args.size, width=args.size,
                         hr_noise=args.hr_noise, method_noise=args.method_noise, shift=args.shift,
                         seed=args.seed)
    if spec.videos < 1 or spec.frames < 2 or args.size < 11:
        raise UsageError("need --videos >= 1, --frames >= 2 and --size >= 11")
    manifest = ex.write_corpus(args.out, spec)
    log.info("wrote %s", manifest)
    return EXIT_OK


COMMANDS = {
    "degrade": cmd_degrade,
    "flow-synth": cmd_flow_synth,
    "warp": cmd_warp,
    "mask": cmd_mask,
    "metrics": cmd_metrics,
    "evaluate": cmd_evaluate,
    "tradeoff": cmd_tradeoff,
    "synth-corpus": cmd_synth_corpus,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO
                                              if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vsrtradeoff {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FrameError, FlowError, OSError, ValueError, FloatingPointError) as exc:
        print(f"vsrtradeoff {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
