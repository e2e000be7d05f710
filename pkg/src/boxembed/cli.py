"""``boxembed`` command line.

Subcommands::

    synth    scene.json + prob.dten + offsets.dten from a seeded synthetic scene
    targets  seg.dten + offsets.dten + mask.dten from scene.json
    group    instances.json + labels.dten from prob.dten + offsets.dten
    eval     metrics.json from instances.json + scene.json
    overlay  PPM (P6) colour overlay of labels.dten
    bench    assignment timing sweep as CSV

Exit codes: 0 success, 1 I/O failure, 2 invalid arguments or malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, maps
from .evaluation import evaluate, predictions_from_json, predictions_from_result, predictions_to_json
from .geometry import AnchorConfig
from .grouping import GroupingConfig, group, resize_outputs
from .maps import InstanceLabelMap, OffsetMap, ProbMap
from .overlay import ppm_bytes, render_overlay
from .synth import NoiseSpec, PlacementError, Scene, generate_scene, oracle_outputs
from .targets import AnnotationError, build_targets

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class InvalidInput(Exception):
    pass


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"{text} must be non-negative")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"{text!r} needs positive integers")
    return vals


def _add_anchor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--anchor-scale", type=_positive_float, default=96.0, help="sqrt of anchor area in pixels")
    p.add_argument("--anchor-aspect", type=_positive_float, default=1.5, help="anchor height / width")


def _anchor(args) -> AnchorConfig:
    return AnchorConfig(args.anchor_scale, args.anchor_aspect)


def _load_map(path: Path, kind):
    try:
        m = maps.load(path)
    except maps.TensorFormatError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc
    if not isinstance(m, kind):
        raise InvalidInput(f"{path}: expected {kind.__name__}, found {type(m).__name__}")
    return m


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc


def _load_scene(path: Path) -> Scene:
    try:
        return Scene.from_dict(_load_json(path))
    except AnnotationError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> None:
    try:
        scene = generate_scene(
            args.height,
            args.width,
            args.n,
            args.shape,
            args.seed,
            gap=args.gap,
            max_box_iou=args.max_box_iou,
            n_crowd=args.crowd,
        )
    except (PlacementError, ValueError) as exc:
        raise InvalidInput(str(exc)) from exc
    noise = NoiseSpec(args.prob_noise, args.offset_noise, args.flip_rate)
    prob, offsets = oracle_outputs(scene, noise, _anchor(args))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "scene.json", scene.to_dict())
    maps.save(prob, out / "prob.dten")
    maps.save(offsets, out / "offsets.dten")


def cmd_targets(args) -> None:
    scene = _load_scene(args.scene)
    try:
        t = build_targets(scene.instances, scene.height, scene.width, _anchor(args))
    except AnnotationError as exc:
        raise InvalidInput(str(exc)) from exc
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    maps.save(t.seg, out / "seg.dten")
    maps.save(t.offsets, out / "offsets.dten")
    maps.save(t.offset_mask, out / "mask.dten")


def cmd_group(args) -> None:
    prob = _load_map(args.prob, ProbMap)
    offsets = _load_map(args.offsets, OffsetMap)
    if prob.shape != offsets.shape:
        raise InvalidInput(f"map sizes differ: {prob.shape} vs {offsets.shape}")
    cfg = GroupingConfig(
        t_c=args.tc,
        nms_iou=args.nms_iou,
        t_iou=args.tiou,
        max_detections=args.max_det,
        anchor=_anchor(args),
    )
    if args.resize_long_side:
        prob, offsets = resize_outputs(prob, offsets, args.resize_long_side, cfg.anchor)
    result = group(prob, offsets, cfg, n_threads=args.threads)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "instances.json", predictions_to_json(predictions_from_result(result)))
    maps.save(result.labels, out / "labels.dten")


def cmd_eval(args) -> None:
    scene = _load_scene(args.scene)
    try:
        preds = predictions_from_json(_load_json(args.instances), scene.height, scene.width)
        result = evaluate(preds, scene)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"{args.instances}: {exc}") from exc
    doc = result.to_dict()
    if args.output is None:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        _write_json(args.output, doc)


def cmd_overlay(args) -> None:
    labels = _load_map(args.labels, InstanceLabelMap)
    args.output.write_bytes(ppm_bytes(render_overlay(labels)))


def cmd_bench(args) -> None:
    try:
        records, fit = bench.run_sweep(args.sizes, args.counts, args.seed, args.repeats, args.threads)
    except (PlacementError, ValueError) as exc:
        raise InvalidInput(str(exc)) from exc
    if args.output is None:
        bench.write_csv(records, sys.stdout)
    else:
        with open(args.output, "w", newline="") as f:
            bench.write_csv(records, f)
    print(
        f"fit: time = {fit.slope:.3e} * Np*M + {fit.intercept:.3e}  R^2 = {fit.r2:.4f}  ({fit.n_points} points)",
        file=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxembed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene and its oracle outputs")
    p.add_argument("--height", type=_positive_int, required=True)
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("-n", type=_nonneg_int, required=True, help="number of instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", choices=("rectangle", "ellipse"), default="rectangle")
    p.add_argument("--gap", type=_nonneg_int, default=1, help="carving margin between instances (pixels)")
    p.add_argument("--max-box-iou", type=_unit, default=None)
    p.add_argument("--crowd", type=_nonneg_int, default=0, help="mark the last N instances as crowd")
    p.add_argument("--prob-noise", type=_nonneg_float, default=0.0)
    p.add_argument("--offset-noise", type=_nonneg_float, default=0.0)
    p.add_argument("--flip-rate", type=_unit, default=0.0)
    _add_anchor_flags(p)
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("targets", help="build training targets from scene.json")
    p.add_argument("scene", type=Path)
    _add_anchor_flags(p)
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("group", help="group pixels into instances")
    p.add_argument("prob", type=Path)
    p.add_argument("offsets", type=Path)
    p.add_argument("--tc", type=_unit, default=0.6, help="peak confidence threshold")
    p.add_argument("--nms-iou", type=_unit, default=0.4)
    p.add_argument("--tiou", type=_unit, default=0.5, help="minimum pixel-to-box IoU for assignment")
    p.add_argument("--max-det", type=_positive_int, default=20)
    p.add_argument("--resize-long-side", type=_positive_int, default=None)
    p.add_argument("--threads", type=_positive_int, default=1)
    _add_anchor_flags(p)
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("eval", help="mask AP/AR of instances.json against scene.json")
    p.add_argument("instances", type=Path)
    p.add_argument("scene", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None, help="metrics.json (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="render labels.dten as a PPM image")
    p.add_argument("labels", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("bench", help="time pixel assignment over a size/instance sweep")
    p.add_argument("--sizes", type=_int_list, default=[128, 256, 384, 512])
    p.add_argument("--counts", type=_int_list, default=[5, 10, 20])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=_positive_int, default=5, help="timed runs per point (>= 5)")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("-o", "--output", type=Path, default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except InvalidInput as exc:
        print(f"boxembed {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"boxembed {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
