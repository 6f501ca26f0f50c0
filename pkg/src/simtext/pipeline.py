"""Label generation and inference post-processing.

``generate_similar_label`` / ``generate_offset_label`` turn annotations into
training masks; ``reconstruct`` turns a probability map back into text
polygons, timing each stage.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from statistics import median
from time import perf_counter_ns
from typing import NamedTuple, Optional

import numpy as np
from scipy import ndimage

from . import geometry as geo
from .errors import DegeneratePolygonError, ParameterError
from .raster import (DEFAULT_BINARIZE_THRESH, binarize, connected_components,
                     rasterize, region_stats, trace_mask)

log = logging.getLogger(__name__)

IGNORE_SENTINEL = "###"


@dataclass
class Annotation:
    polygon: np.ndarray
    transcription: str = ""
    ignore: bool = False
    # (x, y, w, h, theta) when parsed from a rotated-box format
    rotbox: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.polygon = geo.as_polygon(self.polygon)

    @classmethod
    def from_text(cls, polygon, transcription: str) -> "Annotation":
        return cls(polygon, transcription, transcription == IGNORE_SENTINEL)


@dataclass
class Detection:
    polygon: np.ndarray
    score: float

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=np.float64)
        if not 0 <= self.score <= 1:
            raise ParameterError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ReconstructConfig:
    delta: float = 0.6
    binarize_thresh: float = DEFAULT_BINARIZE_THRESH
    min_area: float = 16
    score_thresh: float = 0.5
    method: str = "similar"
    beta: float = 1.5
    join: str = "round"
    clip: bool = True

    def __post_init__(self):
        geo.check_unit_interval("delta", self.delta)
        if not 0 <= self.binarize_thresh <= 1:
            raise ParameterError(f"binarize_thresh must be in [0, 1], got {self.binarize_thresh}")
        if not 0 <= self.score_thresh <= 1:
            raise ParameterError(f"score_thresh must be in [0, 1], got {self.score_thresh}")
        if self.min_area < 0:
            raise ParameterError(f"min_area must be >= 0, got {self.min_area}")
        if self.method not in ("similar", "offset"):
            raise ParameterError(f"method must be 'similar' or 'offset', got {self.method!r}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ParameterError(f"beta must be >= 0, got {self.beta}")


@dataclass
class TimingReport:
    """Stage latencies in microseconds.

    ``binarize_us`` and ``components_us`` are per image; ``trace_us`` and
    ``expand_us`` are medians over the instances kept, whose individual
    samples are in ``trace_samples`` / ``expand_samples``.
    """
    binarize_us: float = 0.0
    components_us: float = 0.0
    trace_us: float = 0.0
    expand_us: float = 0.0
    instances: int = 0
    trace_samples: list = field(default_factory=list)
    expand_samples: list = field(default_factory=list)

    @property
    def total_us(self) -> float:
        return self.binarize_us + self.components_us + sum(self.trace_samples) + sum(self.expand_samples)


class LabelMaps(NamedTuple):
    gt: np.ndarray
    ignore: np.ndarray
    skipped: int


def _generate(anns, h, w, transform) -> LabelMaps:
    gt = np.zeros((h, w), dtype=bool)
    ignore = np.zeros((h, w), dtype=bool)
    skipped = 0
    for ann in anns:
        if ann.ignore:
            ignore |= rasterize(ann.polygon, h, w)
            continue
        try:
            pieces = transform(ann.polygon)
        except DegeneratePolygonError:
            pieces = []
        filled = np.zeros((h, w), dtype=bool)
        for piece in pieces:
            filled |= rasterize(piece, h, w)
        if not filled.any():
            skipped += 1
            continue
        gt |= filled
    if skipped:
        log.warning("skipped %d degenerate or collapsed instance(s)", skipped)
    return LabelMaps(gt, ignore, skipped)


def generate_similar_label(anns, delta: float, h: int, w: int) -> LabelMaps:
    """Union of similar masks of non-ignored instances, plus the ignore mask."""
    geo.check_unit_interval("delta", delta)

    def transform(poly):
        geo.area_perimeter(poly)  # rejects zero-area annotations
        return [geo.similar_shrink(poly, delta)]

    return _generate(anns, h, w, transform)


def generate_offset_label(anns, gamma: float, h: int, w: int, join: str = "round") -> LabelMaps:
    """Shrink-mask baseline: each polygon is offset inward by ``S(1-gamma^2)/L``."""
    geo.check_unit_interval("gamma", gamma)

    def transform(poly):
        d = geo.offset_shrink_distance(poly, gamma)
        return geo.polygon_offset(poly, -d, join=join)

    return _generate(anns, h, w, transform)


def _expand_offset(contour, cfg: ReconstructConfig):
    d = geo.offset_expand_distance(contour, cfg.beta)
    pieces = geo.polygon_offset(contour, d, join=cfg.join)
    if not pieces:
        return None
    return max(pieces, key=lambda q: abs(geo.signed_area(q)))


def reconstruct(m, cfg: ReconstructConfig | None = None):
    """Probability map to detections.

    Returns ``(detections, TimingReport)``; detections are sorted by
    descending score (stable in component order).
    """
    cfg = cfg or ReconstructConfig()
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    timing = TimingReport()

    t0 = perf_counter_ns()
    mask = binarize(m, cfg.binarize_thresh)
    t1 = perf_counter_ns()
    regions = connected_components(mask)
    counts, scores = region_stats(m, regions)
    slices = ndimage.find_objects(regions.labels)
    t2 = perf_counter_ns()
    timing.binarize_us = (t1 - t0) / 1e3
    timing.components_us = (t2 - t1) / 1e3

    dets = []
    for idx in range(regions.count):
        if counts[idx] < cfg.min_area or not scores[idx] > cfg.score_thresh:
            continue
        label = idx + 1
        sl = slices[idx]

        ta = perf_counter_ns()
        contour = trace_mask(regions.labels[sl] == label, sl[0].start, sl[1].start, anchor="edge")
        tb = perf_counter_ns()
        if len(contour) < 3:
            continue
        if cfg.method == "similar":
            poly = geo.similar_expand(contour, cfg.delta)
        else:
            try:
                poly = _expand_offset(contour, cfg)
            except DegeneratePolygonError:
                poly = None
        if poly is not None and cfg.clip:
            poly = np.clip(poly, 0.0, (w, h))
        tc = perf_counter_ns()

        if poly is None:
            continue
        timing.trace_samples.append((tb - ta) / 1e3)
        timing.expand_samples.append((tc - tb) / 1e3)
        dets.append(Detection(poly, float(min(1.0, scores[idx]))))

    timing.instances = len(dets)
    if dets:
        timing.trace_us = median(timing.trace_samples)
        timing.expand_us = median(timing.expand_samples)
    dets.sort(key=lambda d: -d.score)
    return dets, timing
