"""Command-line entry point: ``simtext <command> [flags]``.

Exit status is 0 on success, 1 when processing fails and 2 on usage errors.
Results go to files or stdout, diagnostics to stderr. Settings resolve as
command-line flag, then ``--config`` JSON file, then built-in default.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import formats
from .errors import SimTextError
from .evalharness import bench_postprocess, evaluate
from .gradcheck import run_gradcheck
from .pipeline import ReconstructConfig, generate_offset_label, generate_similar_label, reconstruct
from .synth import BlurSpec, SceneSpec, motion_blur, synth_scene

log = logging.getLogger("simtext")

DEFAULTS = {
    "delta": 0.6,
    "gamma": 0.4,
    "beta": 1.5,
    "theta": 0.5,
    "sigma": 1.0,
    "lambda1": 6.0,
    "lambda2": 0.02,
    "binarize": 0.3,
    "min_area": 16.0,
    "score_thresh": 0.5,
    "iou": 0.5,
    "method": "similar",
    "format": "icdar-quad",
    "iters": 100,
    "warmup": 10,
    "jobs": 1,
    "seed": 0,
    "count": 1,
    "instances": 5,
    "height": None,
    "width": None,
    "blur_len": 1,
    "blur_angle": None,
}

COMMAND_DEFAULTS = {"gradcheck": {"count": 50}}

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p, *names):
    spec = {
        "in": dict(type=Path, help="input directory"),
        "out": dict(type=Path, help="output directory (or file for eval/bench reports)"),
        "format": dict(choices=formats.DATASET_KINDS, help="annotation format"),
        "method": dict(choices=("similar", "offset"), help="text representation"),
        "delta": dict(type=float, help="similar-mask shrink coefficient"),
        "gamma": dict(type=float, help="offset-mask shrink coefficient"),
        "beta": dict(type=float, help="offset-mask extend coefficient"),
        "theta": dict(type=float, help="false-positive probability threshold"),
        "sigma": dict(type=float, help="cosine sharpness in the feature-correction loss"),
        "iou": dict(type=float, help="IoU threshold for a match"),
        "binarize": dict(type=float, help="binarization threshold"),
        "min-area": dict(type=float, help="minimum component area in pixels"),
        "score-thresh": dict(type=float, help="minimum mean component probability"),
        "iters": dict(type=int, help="timed iterations including warmup"),
        "warmup": dict(type=int, help="iterations discarded before statistics"),
        "jobs": dict(type=int, help="worker processes"),
        "seed": dict(type=int, help="random seed"),
        "count": dict(type=int, help="number of scenes / cases"),
        "instances": dict(type=int, help="text instances per scene"),
        "height": dict(type=int, help="canvas height in pixels"),
        "width": dict(type=int, help="canvas width in pixels"),
        "blur-len": dict(type=int, help="motion blur length (odd, 1 disables)"),
        "blur-angle": dict(type=float, help="motion blur angle in radians (default: seeded per image)"),
    }
    for name in names:
        p.add_argument(f"--{name}", default=None, **spec[name])
    p.add_argument("--config", type=Path, default=None, help="JSON file of default settings")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simtext", description="Similar-mask text detection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-labels", help="annotations -> ground-truth PGM masks")
    _common(p, "in", "out", "format", "method", "delta", "gamma", "height", "width", "jobs")

    p = sub.add_parser("reconstruct", help="probability maps (.fmap/.pgm) -> detection files")
    _common(p, "in", "out", "method", "delta", "beta", "binarize", "min-area", "score-thresh", "jobs")

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth directory")
    p.add_argument("--det", type=Path, required=True, help="detection directory (res_img_N.txt)")
    _common(p, "format", "iou", "out", "jobs")

    p = sub.add_parser("bench", help="time post-processing on probability maps")
    p.add_argument("--maps", "--in", dest="maps", type=Path, required=True, help="directory of maps")
    _common(p, "method", "delta", "beta", "binarize", "min-area", "score-thresh", "iters", "warmup", "out")

    p = sub.add_parser("synth", help="write synthetic annotations and probability maps")
    _common(p, "out", "count", "instances", "seed", "delta", "height", "width", "blur-len", "blur-angle")

    p = sub.add_parser("gradcheck", help="finite-difference check of loss gradients")
    _common(p, "count", "seed", "theta", "sigma")
    return parser


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    if getattr(args, "config", None):
        try:
            loaded = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SimTextError(f"cannot read config {args.config}: {exc}") from exc
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None})
    for k in ("in", "out", "gt", "det", "maps"):
        if cfg.get(k) is not None:
            cfg[k] = Path(cfg[k])
    return cfg


def _setup_logging():
    level = os.environ.get("SIMTEXT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(stream=sys.stderr, level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise SimTextError(f"--{k.replace('_', '-')} is required")


def _label_one(job):
    path, out_dir, cfg = job
    anns = formats.read_annotations(path, cfg["format"])
    h, w = cfg["height"], cfg["width"]
    if h is None or w is None:
        extent = np.max([a.polygon.max(axis=0) for a in anns], axis=0) if anns else np.zeros(2)
        w = w or max(1, math.ceil(extent[0]) + 1)
        h = h or max(1, math.ceil(extent[1]) + 1)
    if cfg["method"] == "similar":
        maps = generate_similar_label(anns, cfg["delta"], h, w)
    else:
        maps = generate_offset_label(anns, cfg["gamma"], h, w)
    (out_dir / f"{Path(path).stem}.pgm").write_bytes(formats.write_pgm(maps.gt))
    return maps.skipped


def cmd_gen_labels(cfg):
    _require(cfg, "in", "out")
    files = sorted(p for p in cfg["in"].iterdir() if p.is_file())
    cfg["out"].mkdir(parents=True, exist_ok=True)
    skipped = _pool_map(_label_one, [(p, cfg["out"], cfg) for p in files], cfg["jobs"])
    log.info("wrote %d label masks (%d instances skipped)", len(files), sum(skipped))
    return 0


def load_probmap(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".pgm":
        return formats.read_pgm(data).astype(np.float64)
    return np.clip(formats.read_fmap(data)[0].astype(np.float64), 0.0, 1.0)


def _map_files(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix in (".fmap", ".pgm"))


def _recon_config(cfg) -> ReconstructConfig:
    return ReconstructConfig(delta=cfg["delta"], binarize_thresh=cfg["binarize"], min_area=cfg["min_area"],
                             score_thresh=cfg["score_thresh"], method=cfg["method"], beta=cfg["beta"])


def _reconstruct_one(job):
    path, out_dir, rcfg = job
    dets, _ = reconstruct(load_probmap(path), rcfg)
    (out_dir / f"res_{path.stem}.txt").write_text(formats.write_detections(dets))
    return len(dets)


def cmd_reconstruct(cfg):
    _require(cfg, "in", "out")
    rcfg = _recon_config(cfg)
    files = _map_files(cfg["in"])
    cfg["out"].mkdir(parents=True, exist_ok=True)
    counts = _pool_map(_reconstruct_one, [(p, cfg["out"], rcfg) for p in files], cfg["jobs"])
    log.info("wrote %d detection files (%d detections)", len(files), sum(counts))
    return 0


def _eval_one(job):
    number, gt_path, det_path, kind = job
    gts = formats.read_annotations(gt_path, kind)
    dets = formats.read_detections(det_path.read_text()) if det_path else []
    return f"img_{number}", dets, gts


def cmd_eval(cfg):
    pairs = formats.pair_files(cfg["gt"], cfg["det"])
    jobs = [(n, g, d, cfg["format"]) for n, g, d in pairs]
    report = evaluate(_pool_map(_eval_one, jobs, cfg["jobs"]), cfg["iou"])
    sys.stdout.write(report.table())
    if cfg.get("out"):
        Path(cfg["out"]).write_text(report.keyvalue())
    return 0


def cmd_bench(cfg):
    maps = [load_probmap(p) for p in _map_files(cfg["maps"])]
    if not maps:
        raise SimTextError(f"no .fmap or .pgm maps in {cfg['maps']}")
    res = bench_postprocess(maps, _recon_config(cfg), cfg["iters"], cfg["warmup"])
    sys.stdout.write(res.keyvalue())
    if cfg.get("out"):
        Path(cfg["out"]).write_text(res.keyvalue())
    return 0


def cmd_synth(cfg):
    _require(cfg, "out")
    out = cfg["out"]
    (out / "gts").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(cfg["seed"]).spawn(cfg["count"])
    for i, ss in enumerate(seeds, 1):
        child = int(ss.generate_state(1)[0])
        spec = SceneSpec(height=cfg["height"] or 256, width=cfg["width"] or 256, count=cfg["instances"],
                         seed=child, delta=cfg["delta"])
        scene = synth_scene(spec)
        if scene.placed < scene.requested:
            log.warning("img_%d: placed %d of %d instances", i, scene.placed, scene.requested)
        pmap = scene.probmap
        if cfg["blur_len"] > 1:
            angle = cfg["blur_angle"]
            if angle is None:
                angle = float(np.random.default_rng(child).uniform(0, math.pi))
            pmap = motion_blur(pmap, BlurSpec(cfg["blur_len"], angle))
        lines = "".join(formats.write_icdar(a) + "\n" for a in scene.annotations)
        (out / "gts" / f"gt_img_{i}.txt").write_text(lines)
        (out / "maps" / f"img_{i}.fmap").write_bytes(formats.write_fmap(pmap[None].astype(np.float32)))
    return 0


def cmd_gradcheck(cfg):
    res = run_gradcheck(cfg["count"], cfg["seed"], theta=cfg["theta"], sigma=cfg["sigma"])
    print(f"cases={res.cases}")
    print(f"bce_ohem_max_rel_error={res.bce:.3e}")
    print(f"fcm_loss_max_rel_error={res.fcm:.3e}")
    print(f"fcm_feature_map_max_rel_error={res.fcm_map:.3e}")
    print(f"fcm_attached_center_max_rel_error={res.fcm_map_attached:.3e}")
    print(f"max_rel_error={res.worst:.3e}")
    return 0 if res.worst < GRADCHECK_TOLERANCE else 1


COMMANDS = {
    "gen-labels": cmd_gen_labels,
    "reconstruct": cmd_reconstruct,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = _settings(args)
        return COMMANDS[args.command](cfg)
    except (SimTextError, OSError, ValueError) as exc:
        print(f"simtext {args.command}: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    try:
        code = run(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
    sys.exit(code)


if __name__ == "__main__":
    main()
