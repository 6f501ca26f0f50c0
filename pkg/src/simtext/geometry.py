"""Polygon math for similar-mask and offset-mask text representations.

Polygons are ``(n, 2)`` float64 arrays of ``(x, y)`` pixel coordinates with
``y`` growing downwards. "Counter-clockwise" below means positive shoelace
signed area in the usual x-right/y-up frame; on screen (y down) the same
ordering reads clockwise, which is also the order produced by the contour
tracer and by ICDAR quad annotations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pyclipper

from .errors import DegeneratePolygonError, ParameterError

# Fixed-point scale for the Vatti offsetter (coordinates are integers there).
CLIPPER_SCALE = 1024.0
DEFAULT_ARC_STEP = 0.3


@dataclass(frozen=True)
class ShrinkParams:
    delta: float = 0.6
    gamma: float = 0.4
    beta: float = 1.5

    def __post_init__(self):
        check_unit_interval("delta", self.delta)
        check_unit_interval("gamma", self.gamma)
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ParameterError(f"beta must be >= 0, got {self.beta}")


def check_unit_interval(name, value):
    """Raise ParameterError unless ``0 < value <= 1``."""
    if not (isinstance(value, (int, float, np.floating)) and 0 < value <= 1):
        raise ParameterError(f"{name} must be in (0, 1], got {value!r}")


def as_polygon(points) -> np.ndarray:
    """Validate ``points`` and return a fresh CCW ``(n, 2)`` float64 array.

    Clockwise input is reversed keeping the first vertex in place.
    Zero-area input is returned as-is (callers decide whether to reject it).
    """
    pts = np.array(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ParameterError(f"polygon must have shape (n, 2), got {pts.shape}")
    if len(pts) < 3:
        raise ParameterError(f"polygon needs at least 3 vertices, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise ParameterError("polygon has non-finite coordinates")
    if signed_area(pts) < 0:
        pts = np.concatenate([pts[:1], pts[:0:-1]])
    return pts


def signed_area(pts) -> float:
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def centroid(p) -> np.ndarray:
    """Vertex mean of the polygon (not the area centroid)."""
    return np.asarray(p, dtype=np.float64).mean(axis=0)


def similar_shrink(p, delta: float) -> np.ndarray:
    """Scale every vertex toward the vertex mean by ``delta``."""
    check_unit_interval("delta", delta)
    pts = np.asarray(p, dtype=np.float64)
    center = pts.mean(axis=0)
    return center + (pts - center) * delta


def similar_expand(p, delta: float) -> np.ndarray:
    """Inverse of :func:`similar_shrink`: scale away from the vertex mean by ``1/delta``.

    The center is recomputed from ``p`` itself, which is all that is
    available at inference time.
    """
    check_unit_interval("delta", delta)
    pts = np.asarray(p, dtype=np.float64)
    center = pts.mean(axis=0)
    return center + (pts - center) / delta


def k_of_delta(delta: float) -> float:
    check_unit_interval("delta", delta)
    return (1.0 - delta) / delta


def area_perimeter(p) -> tuple[float, float]:
    """Shoelace area (absolute) and closed edge-length sum.

    Raises DegeneratePolygonError when the area is zero.
    """
    pts = np.asarray(p, dtype=np.float64)
    area = abs(signed_area(pts))
    edges = np.roll(pts, -1, axis=0) - pts
    perimeter = float(np.hypot(edges[:, 0], edges[:, 1]).sum())
    if area == 0.0 or perimeter == 0.0:
        raise DegeneratePolygonError("polygon has zero area")
    return area, perimeter


def offset_shrink_distance(p, gamma: float) -> float:
    """Inward offset distance ``S * (1 - gamma**2) / L`` of the shrink-mask label."""
    check_unit_interval("gamma", gamma)
    area, perimeter = area_perimeter(p)
    return area * (1.0 - gamma * gamma) / perimeter


def offset_expand_distance(p, beta: float) -> float:
    """Outward offset distance ``S' * beta / L'`` used to recover a shrink mask."""
    if not (math.isfinite(beta) and beta >= 0):
        raise ParameterError(f"beta must be >= 0, got {beta!r}")
    area, perimeter = area_perimeter(p)
    return area * beta / perimeter


def polygon_offset(p, d: float, join: str = "round", arc_step: float = DEFAULT_ARC_STEP,
                   miter_limit: float = 2.0) -> list[np.ndarray]:
    """Offset a simple polygon by ``d`` pixels (outward if positive).

    Backed by the Vatti clipper. Round joins are sampled every ``arc_step``
    radians. An inward offset that consumes the polygon returns ``[]``.
    """
    if join not in ("round", "miter"):
        raise ParameterError(f"join must be 'round' or 'miter', got {join!r}")
    if not math.isfinite(d):
        raise ParameterError(f"offset distance must be finite, got {d!r}")
    pts = np.asarray(p, dtype=np.float64)
    if d == 0:
        return [pts.copy()]

    scaled_d = d * CLIPPER_SCALE
    pco = pyclipper.PyclipperOffset()
    pco.MiterLimit = miter_limit
    # Clipper derives its arc step from the chord tolerance: step = 2*acos(1 - tol/|d|).
    pco.ArcTolerance = abs(scaled_d) * (1.0 - math.cos(arc_step / 2.0))
    jt = pyclipper.JT_ROUND if join == "round" else pyclipper.JT_MITER
    path = np.round(pts * CLIPPER_SCALE).astype(np.int64)
    pco.AddPath(path.tolist(), jt, pyclipper.ET_CLOSEDPOLYGON)
    out = []
    for ring in pco.Execute(scaled_d):
        if len(ring) < 3:
            continue
        ring = np.asarray(ring, dtype=np.float64) / CLIPPER_SCALE
        if signed_area(ring) == 0:
            continue
        out.append(as_polygon(ring))
    return out


def raster_overlap(a, b) -> tuple[int, int, int]:
    """Pixel counts ``(|a & b|, |a|, |b|)`` on the integer grid of the union bbox."""
    from .raster import rasterize

    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    both = np.concatenate([pa, pb])
    x0, y0 = np.floor(both.min(axis=0))
    x1, y1 = np.ceil(both.max(axis=0))
    w = int(x1 - x0) + 1
    h = int(y1 - y0) + 1
    shift = np.array([x0, y0])
    ma = rasterize(pa - shift, h, w)
    mb = rasterize(pb - shift, h, w)
    return int(np.count_nonzero(ma & mb)), int(np.count_nonzero(ma)), int(np.count_nonzero(mb))


def polygon_iou(a, b) -> float:
    """Rasterized IoU under the pixel-center rule; 0 when both are empty."""
    inter, na, nb = raster_overlap(a, b)
    union = na + nb - inter
    return inter / union if union else 0.0
