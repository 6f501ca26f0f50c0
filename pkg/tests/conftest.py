import math

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def random_convex_polygon(rng, n=None, span=(20, 500), center=None):
    """Convex polygon: sorted angles on a random ellipse, random rotation."""
    n = n or int(rng.integers(3, 13))
    while True:
        ang = np.sort(rng.uniform(0, 2 * math.pi, n))
        if np.diff(np.concatenate([ang, ang[:1] + 2 * math.pi])).max() < math.pi * 0.9:
            break
    a, b = rng.uniform(*span, size=2) / 2
    pts = np.stack([a * np.cos(ang), b * np.sin(ang)], axis=1)
    t = rng.uniform(0, math.pi)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    c = np.zeros(2) if center is None else np.asarray(center, float)
    return pts @ rot.T + c


def point_on_segment(px, py, ax, ay, bx, by, eps=1e-9):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > eps * max(1.0, math.hypot(bx - ax, by - ay)):
        return False
    return (min(ax, bx) - eps <= px <= max(ax, bx) + eps) and (min(ay, by) - eps <= py <= max(ay, by) + eps)


def point_in_polygon(px, py, poly):
    """Closed even-odd test by ray casting; boundary points count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if point_on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            x = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x:
                inside = not inside
    return inside


def brute_rasterize(poly, h, w):
    poly = [tuple(map(float, p)) for p in poly]
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            out[r, c] = point_in_polygon(c + 0.5, r + 0.5, poly)
    return out


def bfs_label(mask):
    """8-connected labels numbered in row-major order of first pixel."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=int)
    n = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not labels[r, c]:
                n += 1
                stack = [(r, c)]
                labels[r, c] = n
                while stack:
                    y, x = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy, xx = y + dy, x + dx
                            if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not labels[yy, xx]:
                                labels[yy, xx] = n
                                stack.append((yy, xx))
    return labels, n


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
