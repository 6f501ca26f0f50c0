"""Bitmap primitives: polygon fill, thresholding, labeling and border tracing.

Masks are ``(h, w)`` bool arrays and probability maps ``(h, w)`` float arrays,
indexed ``[row, col]``. Pixel ``(r, c)`` has its center at ``(c + 0.5, r + 0.5)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError
from .geometry import signed_area

_EPS = 1e-9
_EIGHT = np.ones((3, 3), dtype=bool)

# Moore neighbourhood as (drow, dcol), clockwise on screen starting at west.
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}

DEFAULT_BINARIZE_THRESH = 0.3


@dataclass(frozen=True)
class LabeledRegions:
    labels: np.ndarray
    count: int

    @property
    def shape(self):
        return self.labels.shape


def as_probmap(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"probability map must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min(initial=0.0) < 0 or arr.max(initial=0.0) > 1:
        raise ParameterError("probability map values must be finite and in [0, 1]")
    return arr


def rasterize(p, h: int, w: int) -> np.ndarray:
    """Fill polygon ``p`` into an ``h x w`` mask.

    A pixel is set when its center is inside (even-odd rule) or on the
    boundary. Zero-area polygons give an empty mask.
    """
    if h <= 0 or w <= 0:
        raise ParameterError(f"canvas must be positive, got {h}x{w}")
    mask = np.zeros((h, w), dtype=bool)
    pts = np.asarray(p, dtype=np.float64)
    if len(pts) < 3 or signed_area(pts) == 0:
        return mask

    ys = pts[:, 1]
    r0 = max(0, math.ceil(ys.min() - 0.5 - _EPS))
    r1 = min(h - 1, math.floor(ys.max() - 0.5 + _EPS))
    if r0 > r1:
        return mask

    x0 = pts[:, 0]
    y0 = ys
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    lo = np.minimum(y0, y1)
    hi = np.maximum(y0, y1)
    dy = y1 - y0
    flat = dy == 0
    slope = np.where(flat, 0.0, (x1 - x0) / np.where(flat, 1.0, dy))

    rows = np.arange(r0, r1 + 1)
    yc = (rows + 0.5)[:, None]
    xcross = x0 + (yc - y0) * slope                       # (R, E)

    # Interior: half-open crossing rule gives correct parity at vertices.
    crossing = (lo <= yc) & (yc < hi) & ~flat
    xs = np.sort(np.where(crossing, xcross, np.nan), axis=1)
    n = crossing.sum(axis=1)
    starts = [xs[:, 0::2], xs[:, 1::2]]
    k = min(starts[0].shape[1], starts[1].shape[1])
    span_a = starts[0][:, :k]
    span_b = starts[1][:, :k]
    valid = np.arange(k)[None, :] < (n // 2)[:, None]
    row_idx = np.broadcast_to(np.arange(len(rows))[:, None], span_a.shape)
    segs = [(row_idx[valid], span_a[valid], span_b[valid])]

    # Boundary: every point of every edge lying on a scanline is included.
    touching = (lo - _EPS <= yc) & (yc <= hi + _EPS)
    sloped = touching & ~flat
    ri, ei = np.nonzero(sloped)
    segs.append((ri, xcross[ri, ei], xcross[ri, ei]))
    ri, ei = np.nonzero(touching & flat)
    segs.append((ri, np.minimum(x0, x1)[ei], np.maximum(x0, x1)[ei]))

    diff = np.zeros((len(rows), w + 1), dtype=np.int32)
    for ri, xa, xb in segs:
        ca = np.maximum(np.ceil(xa - 0.5 - _EPS), 0).astype(np.int64)
        cb = np.minimum(np.floor(xb - 0.5 + _EPS), w - 1).astype(np.int64)
        keep = ca <= cb
        ri, ca, cb = ri[keep], ca[keep], cb[keep]
        np.add.at(diff, (ri, ca), 1)
        np.add.at(diff, (ri, cb + 1), -1)
    mask[r0:r1 + 1] = np.cumsum(diff[:, :w], axis=1) > 0
    return mask


def binarize(m, thresh: float = DEFAULT_BINARIZE_THRESH) -> np.ndarray:
    """Strict threshold: a bit is set iff the value is greater than ``thresh``."""
    if not 0 <= thresh <= 1:
        raise ParameterError(f"threshold must be in [0, 1], got {thresh}")
    return np.asarray(m) > thresh


def connected_components(m) -> LabeledRegions:
    """8-connected labeling; labels follow the row-major order of first pixels."""
    labels, count = ndimage.label(np.asarray(m, dtype=bool), structure=_EIGHT)
    return LabeledRegions(labels, int(count))


def _check_label(r: LabeledRegions, label):
    if not (isinstance(label, (int, np.integer)) and 1 <= label <= r.count):
        raise ParameterError(f"label must be in 1..{r.count}, got {label!r}")


def trace_contour(r: LabeledRegions, label: int, anchor: str = "center") -> np.ndarray:
    """Outer border of component ``label`` as an ``(n, 2)`` array of ``(x, y)``.

    Moore-neighbour following, clockwise on screen, starting at the first
    row-major pixel of the component. With ``anchor="center"`` points are
    pixel centers; ``anchor="edge"`` pushes each point half a pixel toward
    its 4-connected background neighbours so the contour sits on the outer
    pixel edges instead.
    """
    _check_label(r, label)
    if anchor not in ("center", "edge"):
        raise ParameterError(f"anchor must be 'center' or 'edge', got {anchor!r}")
    sl = ndimage.find_objects(r.labels, max_label=label)[label - 1]
    crop = r.labels[sl] == label
    return trace_mask(crop, sl[0].start, sl[1].start, anchor)


def trace_mask(crop: np.ndarray, row0: int = 0, col0: int = 0, anchor: str = "center") -> np.ndarray:
    """Trace the component containing the first row-major set pixel of ``crop``.

    ``row0``/``col0`` translate the result back into canvas coordinates.
    """
    padded = np.pad(crop, 1)
    seq = _moore_trace(padded)
    rc = np.array(seq, dtype=np.float64)
    pts = np.empty_like(rc)
    pts[:, 0] = rc[:, 1] + (col0 - 1 + 0.5)
    pts[:, 1] = rc[:, 0] + (row0 - 1 + 0.5)
    if anchor == "edge":
        idx = np.array(seq)
        rr, cc = idx[:, 0], idx[:, 1]
        bg = ~padded
        pts[:, 0] += 0.5 * (bg[rr, cc + 1].astype(np.float64) - bg[rr, cc - 1])
        pts[:, 1] += 0.5 * (bg[rr + 1, cc].astype(np.float64) - bg[rr - 1, cc])
    return pts


def _moore_trace(img: np.ndarray) -> list[tuple[int, int]]:
    # img is padded by one background pixel on every side.
    start = np.unravel_index(int(np.argmax(img)), img.shape)
    start = (int(start[0]), int(start[1]))
    img = img.tolist()

    def step(cur, back_dir):
        # back_dir indexes the background neighbour we entered from.
        r, c = cur
        for k in range(1, 9):
            i = (back_dir + k) % 8
            dr, dc = _MOORE[i]
            if img[r + dr][c + dc]:
                pr, pc = _MOORE[(i - 1) % 8]
                # previous neighbour, re-expressed relative to the new pixel
                nb = (r + pr - (r + dr), c + pc - (c + dc))
                return (r + dr, c + dc), _MOORE_INDEX[nb]
        return None, back_dir

    first, back = step(start, 0)
    if first is None:
        return [start]
    out = [start]
    cur = first
    while True:
        nxt, back_n = step(cur, back)
        if cur == start and nxt == first:
            break
        out.append(cur)
        cur, back = nxt, back_n
    return out


def region_score(m, r: LabeledRegions, label: int) -> float:
    """Mean probability over the pixels of component ``label``."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != r.shape:
        raise DimensionError(f"map shape {m.shape} != label shape {r.shape}")
    _check_label(r, label)
    return float(m[r.labels == label].mean())


def region_stats(m, r: LabeledRegions) -> tuple[np.ndarray, np.ndarray]:
    """Pixel counts and mean probabilities for labels ``1..count`` in one pass."""
    flat = r.labels.ravel()
    counts = np.bincount(flat, minlength=r.count + 1)[1:]
    sums = np.bincount(flat, weights=np.asarray(m, dtype=np.float64).ravel(), minlength=r.count + 1)[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts
    return counts, means
