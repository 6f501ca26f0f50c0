"""Central finite-difference checks of the analytic loss gradients.

The reference losses here are written as plain per-element loops so the
numerical side never shares code with the vectorized implementations in
:mod:`simtext.losses`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import losses

FD_STEP = 1e-6
# Denominator floor for relative error; entries where both gradients are
# below this are compared absolutely.
REL_FLOOR = 1e-8


def numerical_grad(f, x, step: float = FD_STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + step
        up = f(x)
        x.flat[i] = old - step
        down = f(x)
        x.flat[i] = old
        grad.flat[i] = (up - down) / (2 * step)
    return grad


def max_rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float((np.abs(a - n) / denom).max())


def reference_bce(pred, gt, selection) -> float:
    total = 0.0
    count = 0
    for p, y, s in zip(np.ravel(pred), np.ravel(gt), np.ravel(selection)):
        if not s:
            continue
        p = min(max(p, losses.EPS), 1 - losses.EPS)
        total += -math.log(p) if y else -math.log(1 - p)
        count += 1
    return total / count if count else 0.0


def reference_fcm(features, center, sigma) -> float:
    if len(features) == 0 or center is None:
        return 0.0
    cnorm = math.sqrt(sum(c * c for c in center))
    if cnorm == 0:
        return 0.0
    total = 0.0
    for f in features:
        fnorm = math.sqrt(sum(v * v for v in f))
        cos = sum(a * b for a, b in zip(f, center)) / (fnorm * cnorm) if fnorm else 0.0
        total += 1.0 / (1.0 + math.exp(-sigma * cos))
    return total / len(features)


def reference_fcm_map(fr, g_down, p_down, theta, sigma, fixed_center=None) -> float:
    c, h, w = fr.shape
    pos, fps = [], []
    for r in range(h):
        for q in range(w):
            vec = [fr[k, r, q] for k in range(c)]
            if g_down[r, q]:
                pos.append(vec)
            elif p_down[r, q] > theta:
                fps.append(vec)
    if fixed_center is not None:
        center = list(fixed_center)
    elif pos:
        center = [sum(v[k] for v in pos) / len(pos) for k in range(c)]
    else:
        center = None
    return reference_fcm(fps, center, sigma)


@dataclass
class GradcheckResult:
    bce: float
    fcm: float
    fcm_map: float
    fcm_map_attached: float
    cases: int

    @property
    def worst(self) -> float:
        return max(self.bce, self.fcm, self.fcm_map, self.fcm_map_attached)


def random_case(rng: np.random.Generator):
    """Small random (features, gt, pred) triple; C<=4, H,W<=8."""
    c = int(rng.integers(1, 5))
    h = int(rng.integers(2, 9))
    w = int(rng.integers(2, 9))
    fr = rng.normal(size=(c, h, w))
    gt = rng.random((h, w)) < rng.uniform(0.1, 0.5)
    pred = rng.uniform(0.02, 0.98, size=(h, w))
    return fr, gt, pred


def check_case(fr, gt, pred, theta=losses.DEFAULT_THETA, sigma=losses.DEFAULT_SIGMA):
    # OHEM selection fixed at the unperturbed prediction.
    res = losses.bce_ohem(pred, gt)
    sel = res.selection
    num = numerical_grad(lambda p: reference_bce(p, gt, sel), pred)
    e_bce = max_rel_error(res.grad, num)

    fsel = losses.fcm_select(fr, gt, pred, theta)
    fres = losses.fcm_loss(fsel, sigma)
    num = numerical_grad(lambda f: reference_fcm(f, fsel.center, sigma), fsel.fp_features)
    e_fcm = max_rel_error(fres.grad, num)

    mres = losses.fcm_feature_grad(fr, gt, pred, theta, sigma, detach_center=True)
    num = numerical_grad(lambda f: reference_fcm_map(f, gt, pred, theta, sigma, fsel.center), fr)
    e_map = max_rel_error(mres.grad, num)

    ares = losses.fcm_feature_grad(fr, gt, pred, theta, sigma, detach_center=False)
    num = numerical_grad(lambda f: reference_fcm_map(f, gt, pred, theta, sigma), fr)
    e_att = max_rel_error(ares.grad, num)
    return e_bce, e_fcm, e_map, e_att


def run_gradcheck(cases: int = 50, seed: int = 0, theta=losses.DEFAULT_THETA,
                  sigma=losses.DEFAULT_SIGMA) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    worst = np.zeros(4)
    for _ in range(cases):
        worst = np.maximum(worst, check_case(*random_case(rng), theta=theta, sigma=sigma))
    return GradcheckResult(*worst.tolist(), cases=cases)
