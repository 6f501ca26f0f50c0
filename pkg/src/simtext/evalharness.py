"""ICDAR-style detection matching, P/R/F, and post-processing benchmarks."""
from __future__ import annotations

import gc
from dataclasses import dataclass, field
from statistics import mean, median
from time import perf_counter_ns

import numpy as np

from .errors import ParameterError
from .geometry import raster_overlap
from .pipeline import ReconstructConfig, reconstruct

IGNORE_OVERLAP = 0.5


@dataclass
class ImageResult:
    name: str
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    fmeasure: float = 0.0
    per_image: list = field(default_factory=list)

    def table(self) -> str:
        lines = [f"{'image':<24}{'tp':>6}{'fp':>6}{'fn':>6}"]
        for r in self.per_image:
            lines.append(f"{r.name:<24}{r.tp:>6}{r.fp:>6}{r.fn:>6}")
        lines.append(f"{'total':<24}{self.tp:>6}{self.fp:>6}{self.fn:>6}")
        lines.append(f"precision={self.precision:.4f} recall={self.recall:.4f} fmeasure={self.fmeasure:.4f}")
        return "\n".join(lines) + "\n"

    def keyvalue(self) -> str:
        keys = ("tp", "fp", "fn", "precision", "recall", "fmeasure")
        return "".join(f"{k}={getattr(self, k)}\n" for k in keys)


def compute_prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if min(tp, fp, fn) < 0:
        raise ParameterError("counts must be non-negative")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _bbox(poly):
    pts = np.asarray(poly, dtype=np.float64)
    return (*pts.min(axis=0), *pts.max(axis=0))


def _disjoint(a, b):
    # pixel-center rasters of boxes separated by a full pixel cannot touch
    return a[2] + 1 < b[0] or b[2] + 1 < a[0] or a[3] + 1 < b[1] or b[3] + 1 < a[1]


def _poly_key(poly):
    return tuple(np.asarray(poly, dtype=np.float64).ravel().tolist())


def match_detections(dets, gts, iou_thresh: float = 0.5) -> tuple[int, int, int]:
    """Greedy one-to-one matching in descending score order.

    Detections covering more than half their own area with an ignored GT
    are dropped first. Each remaining detection takes the unmatched GT with
    the highest IoU above ``iou_thresh``; equal IoUs are resolved by GT
    coordinates so the result does not depend on GT order. Equal scores keep
    detection input order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    cares = [g for g in gts if not g.ignore]
    ignored = [g for g in gts if g.ignore]
    keys = [_poly_key(g.polygon) for g in cares]
    care_boxes = [_bbox(g.polygon) for g in cares]
    ignore_boxes = [_bbox(g.polygon) for g in ignored]
    matched = [False] * len(cares)
    tp = fp = 0
    for i in order:
        det = dets[i].polygon
        box = _bbox(det)
        dropped = False
        for g, gbox in zip(ignored, ignore_boxes):
            if _disjoint(box, gbox):
                continue
            inter, area_det, _ = raster_overlap(det, g.polygon)
            if area_det and inter / area_det > IGNORE_OVERLAP:
                dropped = True
                break
        if dropped:
            continue
        best = None
        for j, g in enumerate(cares):
            if matched[j] or _disjoint(box, care_boxes[j]):
                continue
            inter, na, nb = raster_overlap(det, g.polygon)
            union = na + nb - inter
            iou = inter / union if union else 0.0
            if iou > iou_thresh and (best is None or (iou, _neg(keys[j])) > (best[0], _neg(keys[best[1]]))):
                best = (iou, j)
        if best is None:
            fp += 1
        else:
            matched[best[1]] = True
            tp += 1
    fn = matched.count(False)
    return tp, fp, fn


def _neg(key):
    # prefer the lexicographically smaller polygon on exact IoU ties
    return tuple(-v for v in key)


def evaluate(pairs, iou_thresh: float = 0.5) -> EvalReport:
    """Aggregate matching over ``(name, detections, annotations)`` triples."""
    report = EvalReport()
    for name, dets, gts in pairs:
        tp, fp, fn = match_detections(dets, gts, iou_thresh)
        report.per_image.append(ImageResult(name, tp, fp, fn))
        report.tp += tp
        report.fp += fp
        report.fn += fn
    report.precision, report.recall, report.fmeasure = compute_prf(report.tp, report.fp, report.fn)
    return report


@dataclass
class BenchResult:
    method: str
    iterations: int
    warmup: int
    samples: int
    median_us: float
    mean_us: float
    p95_us: float
    fps: float
    stage_us: dict
    expand_samples: list = field(default_factory=list, repr=False)

    @property
    def expand_median_us(self) -> float:
        return median(self.expand_samples) if self.expand_samples else 0.0

    def keyvalue(self) -> str:
        rows = {
            "method": self.method, "iterations": self.iterations, "warmup": self.warmup,
            "samples": self.samples, "median_us": f"{self.median_us:.3f}",
            "mean_us": f"{self.mean_us:.3f}", "p95_us": f"{self.p95_us:.3f}",
            "fps": f"{self.fps:.3f}", "expand_instance_median_us": f"{self.expand_median_us:.3f}",
        }
        rows.update({f"stage_{k}_us": f"{v:.3f}" for k, v in self.stage_us.items()})
        return "".join(f"{k}={v}\n" for k, v in rows.items())


def bench_postprocess(maps, cfg: ReconstructConfig, iters: int, warmup: int = 0) -> BenchResult:
    """Time ``reconstruct`` over all ``maps`` ``iters`` times, discarding the first ``warmup``.

    One sample is the wall time for a full pass over ``maps`` divided by the
    number of maps, i.e. a per-image latency. Runs in the calling thread.
    """
    if iters < 1:
        raise ParameterError(f"iters must be >= 1, got {iters}")
    if not 0 <= warmup < iters:
        raise ParameterError(f"warmup must be in [0, iters), got {warmup}")
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise ParameterError("no maps to benchmark")

    samples = []
    stages = {"binarize": [], "components": [], "trace": [], "expand": []}
    expand = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for it in range(iters):
            timings = []
            t0 = perf_counter_ns()
            for m in maps:
                timings.append(reconstruct(m, cfg)[1])
            elapsed = (perf_counter_ns() - t0) / 1e3 / len(maps)
            if it < warmup:
                continue
            samples.append(elapsed)
            for t in timings:
                stages["binarize"].append(t.binarize_us)
                stages["components"].append(t.components_us)
                stages["trace"].extend(t.trace_samples)
                stages["expand"].extend(t.expand_samples)
                expand.extend(t.expand_samples)
    finally:
        if gc_was_enabled:
            gc.enable()

    med = median(samples)
    return BenchResult(
        method=cfg.method,
        iterations=iters,
        warmup=warmup,
        samples=len(samples),
        median_us=med,
        mean_us=mean(samples),
        p95_us=float(np.percentile(samples, 95)),
        fps=1e6 / med if med > 0 else float("inf"),
        stage_us={k: (median(v) if v else 0.0) for k, v in stages.items()},
        expand_samples=expand,
    )
