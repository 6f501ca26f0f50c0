"""Seeded synthetic scenes and motion blur for desk-scale experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .geometry import check_unit_interval, similar_shrink
from .pipeline import Annotation
from .raster import rasterize

# Free pixels kept between placed instances so their masks never touch.
PLACEMENT_GAP = 2


@dataclass(frozen=True)
class SceneSpec:
    height: int = 256
    width: int = 256
    count: int = 3
    size_range: tuple = (20.0, 80.0)
    rotation_range: tuple = (-math.pi / 6, math.pi / 6)
    seed: int = 0
    delta: float = 0.6
    max_tries: int = 200

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ParameterError("canvas must be positive")
        if self.count < 0:
            raise ParameterError("count must be >= 0")
        lo, hi = self.size_range
        if not 0 < lo <= hi:
            raise ParameterError(f"bad size range {self.size_range}")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise ParameterError(f"bad rotation range {self.rotation_range}")
        check_unit_interval("delta", self.delta)


@dataclass(frozen=True)
class BlurSpec:
    length: int = 9
    angle: float = 0.0

    def __post_init__(self):
        if not isinstance(self.length, (int, np.integer)) or self.length < 1 or self.length % 2 == 0:
            raise ParameterError(f"blur length must be an odd integer >= 1, got {self.length!r}")
        if not math.isfinite(self.angle):
            raise ParameterError("blur angle must be finite")


@dataclass
class Scene:
    annotations: list
    probmap: np.ndarray
    requested: int

    @property
    def placed(self) -> int:
        return len(self.annotations)

    def __iter__(self):
        # allows ``anns, pmap = synth_scene(spec)``
        return iter((self.annotations, self.probmap))


def random_quad(rng: np.random.Generator, size_range, rotation_range, jitter: float = 0.0) -> np.ndarray:
    """Rotated rectangle about the origin, optionally with jittered corners.

    ``jitter`` moves each corner by up to that fraction of the short side;
    kept below 0.2 the quad stays convex.
    """
    w, h = rng.uniform(*size_range, size=2)
    w, h = max(w, h), min(w, h)
    theta = rng.uniform(*rotation_range)
    box = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
    if jitter:
        box = box + rng.uniform(-jitter, jitter, size=box.shape) * h
    c, s = math.cos(theta), math.sin(theta)
    return box @ np.array([[c, -s], [s, c]]).T


def synth_scene(spec: SceneSpec) -> Scene:
    """Place up to ``spec.count`` non-overlapping rotated boxes and render similar masks.

    The probability map is 1.0 inside each instance's similar mask and 0.0
    elsewhere. Placement retries are bounded; ``Scene.placed`` may be lower
    than requested.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    occupied = np.zeros((h, w), dtype=bool)
    probmap = np.zeros((h, w), dtype=np.float64)
    anns = []
    grow = np.ones((2 * PLACEMENT_GAP + 1,) * 2, dtype=bool)
    for _ in range(spec.count):
        for _ in range(spec.max_tries):
            quad = random_quad(rng, spec.size_range, spec.rotation_range)
            lo = -quad.min(axis=0)
            hi = np.array([w, h]) - quad.max(axis=0)
            if (lo > hi).any():
                continue
            poly = quad + rng.uniform(lo, hi)
            # work in a bbox window padded by the gap
            x0, y0 = np.maximum(np.floor(poly.min(axis=0)).astype(int) - PLACEMENT_GAP, 0)
            x1, y1 = np.ceil(poly.max(axis=0)).astype(int) + PLACEMENT_GAP + 1
            x1, y1 = min(x1, w), min(y1, h)
            filled = rasterize(poly - (x0, y0), y1 - y0, x1 - x0)
            window = occupied[y0:y1, x0:x1]
            if not filled.any() or (ndimage.binary_dilation(filled, grow) & window).any():
                continue
            window |= filled
            anns.append(Annotation(poly, f"text{len(anns)}"))
            probmap[rasterize(similar_shrink(poly, spec.delta), h, w)] = 1.0
            break
    return Scene(anns, probmap, spec.count)


def blur_kernel(spec: BlurSpec) -> np.ndarray:
    """Normalized ``L x L`` line kernel through the center at ``spec.angle``.

    The line advances one cell per step along its major axis and is snapped
    to the nearest cell on the minor axis, so it covers exactly ``L`` cells
    of weight ``1/L`` at any angle.
    """
    n = spec.length
    r = n // 2
    k = np.zeros((n, n))
    c, s = math.cos(spec.angle), math.sin(spec.angle)
    t = (np.arange(n) - r) / max(abs(c), abs(s))
    cols = np.floor(r + t * c + 0.5).astype(int)
    rows = np.floor(r - t * s + 0.5).astype(int)
    np.add.at(k, (np.clip(rows, 0, n - 1), np.clip(cols, 0, n - 1)), 1.0)
    return k / k.sum()


def motion_blur(m, spec: BlurSpec) -> np.ndarray:
    """Convolve with :func:`blur_kernel`, clamping at the borders."""
    m = np.asarray(m, dtype=np.float64)
    if spec.length == 1:
        return m.copy()
    out = ndimage.convolve(m, blur_kernel(spec), mode="nearest")
    # Every output pixel is a convex combination of inputs.
    return np.clip(out, m.min(), m.max())
