"""
``fasthand`` command line.

Exit codes: 0 success, 1 validation failure (bad flags, malformed or
mismatched annotation files), 2 I/O or model failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FastHandError, WeightFormatError

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
THREADS_ENV = "FASTHAND_THREADS"

logger = logging.getLogger("fasthand")


class UsageError(Exception):
    pass


class ModelLoadError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit with 2, which is reserved for I/O failures here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Validated flags shared by the subcommands."""

    command: str
    model: str | None = None
    inputs: list = field(default_factory=list)
    output: str | None = None
    sigmas: tuple = ()
    seed: int = 0
    margin: float = 1.5
    stabilize: bool = True
    subpixel: bool = True
    threads: int = 1

    def validate(self):
        if self.threads < 1:
            raise UsageError(f"thread count must be >= 1, got {self.threads}")
        if not self.margin > 0:
            raise UsageError(f"margin must be positive, got {self.margin}")
        bad = [s for s in self.sigmas if not s > 0]
        if bad:
            raise UsageError(f"sigma values must be positive, got {bad}")
        return self


def _default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None


def _config(args) -> RunConfig:
    threads = args.threads if getattr(args, "threads", None) is not None else _default_threads()
    return RunConfig(
        command=args.command,
        model=getattr(args, "model", None),
        inputs=list(getattr(args, "input", None) or []),
        output=getattr(args, "output", None),
        sigmas=tuple(getattr(args, "sigma", None) or ()),
        seed=getattr(args, "seed", 0),
        margin=getattr(args, "margin", 1.5),
        stabilize=not getattr(args, "no_stabilize", False),
        subpixel=not getattr(args, "no_subpixel", False),
        threads=threads,
    ).validate()


def _load_model(path):
    from .weights import load_model

    if path is None:
        raise UsageError("--model is required")
    try:
        return load_model(path)
    except OSError as exc:
        raise ModelLoadError(f"cannot read model {path}: {exc.strerror or exc}") from None
    except (WeightFormatError, ValueError) as exc:
        raise ModelLoadError(f"bad model file {path}: {exc}") from None


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_init_model(cfg: RunConfig, args) -> int:
    from .model import PRESETS, build_fasthand
    from .weights import save_weights

    if cfg.output is None:
        raise UsageError("init-model needs --output")
    model = build_fasthand(PRESETS[args.preset], seed=cfg.seed)
    save_weights(model, cfg.output)
    print(f"wrote {cfg.output}: preset {args.preset}, {model.param_count():,} parameters")
    return EXIT_OK


def cmd_infer(cfg: RunConfig, args) -> int:
    from .annotations import AnnotationRecord, format_record
    from .geometry import BoundingBox
    from .imageio import draw_skeleton, read_image
    from .tracking import Pipeline, read_detections

    if not cfg.inputs:
        raise UsageError("infer needs at least one --input image")
    model = _load_model(cfg.model)
    boxes = read_detections(args.detections) if args.detections else None
    overlay_dir = Path(args.overlay_dir) if args.overlay_dir else None
    if overlay_dir:
        overlay_dir.mkdir(parents=True, exist_ok=True)

    pipeline = Pipeline(model, cfg.margin, stabilize=cfg.stabilize, subpixel=cfg.subpixel)
    lines, failed = [], 0
    for index, path in enumerate(cfg.inputs):
        try:
            image = read_image(path)
        except OSError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            failed += 1
            continue
        h, w = image.shape[:2]
        detection = boxes.get(index) if boxes is not None else BoundingBox(0, 0, w, h)
        result = pipeline.process_frame(image, detection)
        if result.keypoints is None:
            print(f"warning: {path}: no hand ({result.status})", file=sys.stderr)
            continue
        lines.append(format_record(AnnotationRecord(path, w, h, result.keypoints.xy)))
        if overlay_dir:
            draw_skeleton(image, result.keypoints.xy).save(overlay_dir / (Path(path).stem + "_overlay.png"))
    _emit("".join(line + "\n" for line in lines), cfg.output)
    if failed == len(cfg.inputs):
        print("error: no input could be read", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    from .annotations import read_annotations
    from .metrics import DEFAULT_SIGMAS, evaluate

    gt = read_annotations(args.ground_truth)
    if args.predictions:
        pred = read_annotations(args.predictions)
        kw = {}
    elif cfg.model:
        pred = _load_model(cfg.model)
        root = args.image_root or str(Path(args.ground_truth).parent)
        kw = dict(image_root=root, margin=cfg.margin, subpixel=cfg.subpixel, threads=cfg.threads)
    else:
        raise UsageError("eval needs --predictions or --model")
    rep = evaluate(pred, gt, sigmas=cfg.sigmas or DEFAULT_SIGMAS, **kw)
    text = {"text": rep.to_text, "json": lambda: rep.to_json() + "\n", "csv": rep.to_table}[args.format]()
    _emit(text, cfg.output)
    if cfg.output and args.format != "text":
        sys.stdout.write(rep.to_text())
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    from .bench import benchmark
    from .imageio import read_image
    from .tracking import read_detections

    if args.iterations < 1:
        raise UsageError(f"--iterations must be >= 1, got {args.iterations}")
    model = _load_model(cfg.model)
    image = read_image(cfg.inputs[0]) if cfg.inputs else None
    box = None
    if args.detections:
        box = read_detections(args.detections).get(0)
    rep = benchmark(model, image, box, iterations=args.iterations, warmup=args.warmup,
                    threads=cfg.threads, margin=cfg.margin)
    _emit(rep.to_text(), cfg.output)
    return EXIT_OK


def cmd_gen_dataset(cfg: RunConfig, args) -> int:
    from .annotations import format_record
    from .dataset import Intrinsics, MeshFrame, augment, read_vertex_map, record_from_mesh
    from .imageio import read_image, write_image

    if not cfg.inputs:
        raise UsageError("gen-dataset needs at least one --input mesh file")
    if cfg.output is None:
        raise UsageError("gen-dataset needs --output")
    if args.augment < 0:
        raise UsageError(f"--augment must be >= 0, got {args.augment}")
    vmap = read_vertex_map(args.vertex_map)
    intrinsics = Intrinsics.from_file(args.intrinsics) if args.intrinsics else None
    image_dir = Path(args.image_dir) if args.image_dir else Path(cfg.output).resolve().parent
    if args.augment:
        image_dir.mkdir(parents=True, exist_ok=True)

    def one(item):
        index, path = item
        mesh = MeshFrame.load(path, intrinsics)
        rec = record_from_mesh(mesh, vmap)
        out = [rec]
        if args.augment:
            root = Path(args.image_root) if args.image_root else Path(path).parent
            image = read_image(root / rec.image_path)
            for v in augment(rec, image, seed=(cfg.seed, index), count=args.augment):
                write_image(image_dir / v.record.image_path, v.image)
                out.append(v.record)
        return out

    items = list(enumerate(cfg.inputs))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            groups = list(pool.map(one, items))
    else:
        groups = [one(i) for i in items]
    records = [r for g in groups for r in g]
    _emit("".join(format_record(r) + "\n" for r in records), cfg.output)
    print(f"wrote {len(records)} records to {cfg.output}", file=sys.stderr)
    return EXIT_OK


def cmd_render(cfg: RunConfig, args) -> int:
    from .annotations import read_annotations
    from .imageio import blend_heatmaps, draw_skeleton, read_image, write_image

    if cfg.output is None:
        raise UsageError("render needs --output")
    image = read_image(cfg.inputs[0]) if cfg.inputs else None
    if args.heatmaps:
        try:
            heatmaps = np.load(args.heatmaps, allow_pickle=False)
        except (EOFError, ValueError) as exc:
            raise OSError(f"cannot read heatmaps {args.heatmaps}: {exc}") from None
        if heatmaps.ndim == 2:
            heatmaps = heatmaps[..., None]
        if heatmaps.ndim != 3:
            raise UsageError(f"{args.heatmaps}: expected an HxWxC array, got shape {heatmaps.shape}")
        if image is None:
            image = np.zeros(heatmaps.shape[:2] + (3,), np.float32)
        write_image(cfg.output, blend_heatmaps(image, heatmaps))
        return EXIT_OK
    if image is None:
        raise UsageError("rendering keypoints needs an --input image")
    records = read_annotations(args.keypoints)
    name = cfg.inputs[0]
    matches = [r for r in records if r.image_path == name] or \
              [r for r in records if Path(r.image_path).name == Path(name).name]
    if not matches:
        if len(records) != 1:
            raise UsageError(f"{args.keypoints}: no record for {name}")
        matches = records
    rec = matches[0]
    draw_skeleton(image, rec.xy, rec.visibility).save(cfg.output)
    return EXIT_OK


COMMANDS = {
    "init-model": cmd_init_model,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gen-dataset": cmd_gen_dataset,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    from .model import PRESETS

    parser = _Parser(prog="fasthand", description="2D hand landmark inference, evaluation and dataset tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=False, inputs=False, threads=False, tracking=False):
        if model:
            p.add_argument("--model", help="weight file (.fsth)")
        if inputs:
            p.add_argument("--input", action="extend", nargs="+", metavar="PATH", help="input file(s); repeatable")
        p.add_argument("--output", help="output path (default: stdout)")
        if threads:
            p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
        if tracking:
            p.add_argument("--margin", type=float, default=1.5, help="ROI side as a multiple of the box side")
            p.add_argument("--no-subpixel", action="store_true", help="disable quarter-cell peak refinement")

    p = sub.add_parser("init-model", help="write a randomly initialised weight file")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")

    p = sub.add_parser("infer", help="track a hand through a sequence of images")
    common(p, model=True, inputs=True, tracking=True)
    p.add_argument("--detections", help="'frame x1 y1 x2 y2' boxes; default is the whole image per frame")
    p.add_argument("--no-stabilize", action="store_true", help="use each detection as-is")
    p.add_argument("--overlay-dir", help="write skeleton overlays here")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    common(p, model=True, threads=True, tracking=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--predictions", help="prediction annotation file (or use --model)")
    p.add_argument("--image-root", help="directory ground-truth image paths are relative to")
    p.add_argument("--sigma", type=float, action="append", help="PCK threshold; repeatable (default 0.1 0.2 0.3)")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")

    p = sub.add_parser("bench", help="time crop + forward + decode")
    common(p, model=True, inputs=True, threads=True, tracking=True)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--detections", help="box for the benchmark frame (frame 0 is used)")

    p = sub.add_parser("gen-dataset", help="project hand meshes to 2D annotations")
    common(p, inputs=True, threads=True)
    p.add_argument("--vertex-map", required=True, help="21 lines of 10 vertex indices")
    p.add_argument("--intrinsics", help="'fx fy cx cy width height'; overrides values in the mesh files")
    p.add_argument("--augment", type=int, default=0, metavar="N", help="scale/crop variants per record")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-root", help="where source images live (default: next to each mesh file)")
    p.add_argument("--image-dir", help="where augmented images go (default: next to --output)")

    p = sub.add_parser("render", help="draw heatmaps or keypoints over an image")
    common(p, inputs=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--heatmaps", help=".npy HxWxC heatmap stack")
    group.add_argument("--keypoints", help="annotation file")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # ContractError, ConfigError and AnnotationFormatError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, FastHandError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
