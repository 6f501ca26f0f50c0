"""Training objectives: OHEM binary cross-entropy and the feature-correction loss.

All tensors are float64 numpy arrays. Feature maps are ``(C, H, W)``;
masks and probability maps are ``(H, W)``. Gradients are analytic and
returned alongside the value.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError

EPS = 1e-7
DEFAULT_THETA = 0.5
DEFAULT_SIGMA = 1.0
DEFAULT_NEG_RATIO = 3
# Hardest negatives kept when an image has no positives.
ZERO_POSITIVE_NEGATIVES = 100
LAMBDA1 = 6.0
LAMBDA2 = 0.02


@dataclass
class LossValueGrad:
    value: float
    grad: np.ndarray
    # Boolean mask of the samples the loss was evaluated on, when meaningful.
    selection: Optional[np.ndarray] = None


@dataclass
class FcmSelection:
    center: Optional[np.ndarray]
    fp_positions: np.ndarray  # flat row-major pixel indices
    fp_features: np.ndarray   # (M, C)

    def __post_init__(self):
        if len(self.fp_positions) != len(self.fp_features):
            raise DimensionError("fp_positions and fp_features differ in length")


def _as_features(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise DimensionError(f"feature map must be (C, H, W) with C,H,W >= 1, got {f.shape}")
    return f


def _same_hw(*arrays):
    shape = arrays[0].shape[-2:]
    for a in arrays[1:]:
        if a.shape[-2:] != shape:
            raise DimensionError(f"spatial size {a.shape[-2:]} != {shape}")


def maxpool_down(m, factor: int) -> np.ndarray:
    """Non-overlapping ``factor x factor`` max pooling of a 2-D map."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D map, got shape {m.shape}")
    if factor < 1:
        raise ParameterError(f"factor must be >= 1, got {factor}")
    h, w = m.shape
    if h % factor or w % factor:
        raise DimensionError(f"{h}x{w} map is not divisible by pooling factor {factor}")
    return m.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3))


def conv2d(x, weight, bias=None) -> np.ndarray:
    """Zero-padded 'same' cross-correlation. ``weight`` is ``(Cout, Cin, k, k)``, k odd."""
    x = _as_features(x)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim == 2:
        weight = weight[:, :, None, None]
    cout, cin, kh, kw = weight.shape
    if cin != x.shape[0]:
        raise DimensionError(f"weight expects {cin} input channels, input has {x.shape[0]}")
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"kernel must be square and odd, got {kh}x{kw}")
    pad = kh // 2
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((cout, h, w))
    for dy in range(kh):
        for dx in range(kw):
            out += np.einsum("oc,chw->ohw", weight[:, :, dy, dx], xp[:, dy:dy + h, dx:dx + w])
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def refine_features(f, conv3_weights, norm_affine, conv1_weights, conv3_bias=None, conv1_bias=None):
    """``Conv1x1(ReLU(scale * Conv3x3(f) + shift))``.

    ``norm_affine`` is a ``(scale, shift)`` pair of per-channel vectors standing
    in for inference-mode batch norm.
    """
    h = conv2d(f, conv3_weights, conv3_bias)
    scale, shift = (np.asarray(v, dtype=np.float64) for v in norm_affine)
    if scale.shape != (h.shape[0],) or shift.shape != (h.shape[0],):
        raise DimensionError(f"norm parameters must have shape ({h.shape[0]},)")
    h = np.maximum(scale[:, None, None] * h + shift[:, None, None], 0.0)
    return conv2d(h, conv1_weights, conv1_bias)


def foreground_center(fr, g_down) -> Optional[np.ndarray]:
    """Mean feature vector over positive positions; ``None`` when there are none."""
    fr = _as_features(fr)
    g = np.asarray(g_down).astype(bool)
    _same_hw(fr, g)
    if not g.any():
        return None
    return fr[:, g].mean(axis=1)


def false_positive_select(fr, g_down, p_down, theta: float = DEFAULT_THETA):
    """Positions (row-major flat indices) and features where ``G'=0`` and ``P'>theta``."""
    if not 0 <= theta <= 1:
        raise ParameterError(f"theta must be in [0, 1], got {theta}")
    fr = _as_features(fr)
    g = np.asarray(g_down).astype(bool)
    p = np.asarray(p_down, dtype=np.float64)
    _same_hw(fr, g, p)
    positions = np.flatnonzero(~g & (p > theta))
    features = fr.reshape(fr.shape[0], -1)[:, positions].T
    return positions, features


def fcm_select(fr, g_down, p_down, theta: float = DEFAULT_THETA) -> FcmSelection:
    center = foreground_center(fr, g_down)
    positions, features = false_positive_select(fr, g_down, p_down, theta)
    return FcmSelection(center, positions, features)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def fcm_loss(sel: FcmSelection, sigma: float = DEFAULT_SIGMA) -> LossValueGrad:
    """Mean of ``sigmoid(sigma * cos(f_j, center))`` over the false positives.

    The gradient is w.r.t. ``sel.fp_features`` with the center held constant.
    Zero-norm features get cosine 0 and zero gradient; a missing or zero-norm
    center skips the loss entirely.
    """
    feats = np.asarray(sel.fp_features, dtype=np.float64)
    grad = np.zeros_like(feats)
    m = len(feats)
    center = sel.center
    if m == 0 or center is None:
        return LossValueGrad(0.0, grad)
    center = np.asarray(center, dtype=np.float64)
    cnorm = np.linalg.norm(center)
    if cnorm == 0:
        return LossValueGrad(0.0, grad)

    fnorm = np.linalg.norm(feats, axis=1)
    ok = fnorm > 0
    safe = np.where(ok, fnorm, 1.0)
    cos = np.where(ok, feats @ center / (safe * cnorm), 0.0)
    s = _sigmoid(sigma * cos)
    value = float(s.mean())

    # d cos / d f = c / (|f||c|) - cos * f / |f|^2
    dcos = center[None, :] / (safe * cnorm)[:, None] - (cos / safe ** 2)[:, None] * feats
    coef = s * (1 - s) * sigma / m
    grad = np.where(ok[:, None], coef[:, None] * dcos, 0.0)
    return LossValueGrad(value, grad)


def fcm_feature_grad(fr, g_down, p_down, theta: float = DEFAULT_THETA, sigma: float = DEFAULT_SIGMA,
                     detach_center: bool = True) -> LossValueGrad:
    """FCM loss with its gradient scattered back onto the whole ``(C, H, W)`` map.

    With ``detach_center=False`` the center's dependence on the positive
    features is differentiated too.
    """
    fr = _as_features(fr)
    sel = fcm_select(fr, g_down, p_down, theta)
    res = fcm_loss(sel, sigma)
    c, h, w = fr.shape
    grad = np.zeros((c, h * w))
    grad[:, sel.fp_positions] = res.grad.T
    if not detach_center and res.value != 0.0:
        feats = sel.fp_features
        center = sel.center
        cnorm = np.linalg.norm(center)
        fnorm = np.linalg.norm(feats, axis=1)
        ok = fnorm > 0
        safe = np.where(ok, fnorm, 1.0)
        cos = np.where(ok, feats @ center / (safe * cnorm), 0.0)
        s = _sigmoid(sigma * cos)
        # d cos / d c = f / (|f||c|) - cos * c / |c|^2
        dcos_dc = feats / (safe * cnorm)[:, None] - (cos / cnorm ** 2)[:, None] * center[None, :]
        coef = np.where(ok, s * (1 - s) * sigma / len(feats), 0.0)
        dcenter = coef @ dcos_dc
        pos = np.flatnonzero(np.asarray(g_down).astype(bool).ravel())
        grad[:, pos] += dcenter[:, None] / len(pos)
    return LossValueGrad(res.value, grad.reshape(c, h, w))


def ohem_selection(pred, gt, neg_ratio: int = DEFAULT_NEG_RATIO,
                   zero_positive_negatives: int = ZERO_POSITIVE_NEGATIVES) -> np.ndarray:
    """Boolean mask: every positive plus the hardest ``neg_ratio * positives`` negatives.

    Hardness is the per-pixel BCE; ties go to the lower row-major index.
    """
    pred = np.clip(np.asarray(pred, dtype=np.float64), EPS, 1 - EPS)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise DimensionError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    n_pos = int(gt.sum())
    neg_idx = np.flatnonzero(~gt)
    k = neg_ratio * n_pos if n_pos else zero_positive_negatives
    k = min(k, len(neg_idx))
    sel = gt.copy()
    if k:
        neg_loss = -np.log(1 - pred.ravel()[neg_idx])
        hardest = neg_idx[np.argsort(-neg_loss, kind="stable")[:k]]
        sel.ravel()[hardest] = True
    return sel


def bce_ohem(pred, gt, neg_ratio: int = DEFAULT_NEG_RATIO,
             zero_positive_negatives: int = ZERO_POSITIVE_NEGATIVES,
             selection: Optional[np.ndarray] = None) -> LossValueGrad:
    """Mean BCE over the OHEM-selected pixels, with gradient w.r.t. ``pred``.

    Pass ``selection`` to hold the selected set fixed (e.g. for finite
    differences). Predictions are clamped to ``[EPS, 1 - EPS]``; the gradient
    is zero where the clamp is active.
    """
    raw = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt).astype(bool)
    if raw.shape != gt.shape:
        raise DimensionError(f"pred shape {raw.shape} != gt shape {gt.shape}")
    if selection is None:
        selection = ohem_selection(raw, gt, neg_ratio, zero_positive_negatives)
    n = int(selection.sum())
    grad = np.zeros_like(raw)
    if n == 0:
        return LossValueGrad(0.0, grad, selection)
    p = np.clip(raw, EPS, 1 - EPS)
    per_pixel = np.where(gt, -np.log(p), -np.log(1 - p))
    value = float(per_pixel[selection].sum() / n)
    d = np.where(gt, -1.0 / p, 1.0 / (1 - p)) / n
    inside = (raw > EPS) & (raw < 1 - EPS)
    grad[selection & inside] = d[selection & inside]
    return LossValueGrad(value, grad, selection)


def total_loss(l_s: float, l_fc: float, lambda1: float = LAMBDA1, lambda2: float = LAMBDA2) -> float:
    return lambda1 * l_s + lambda2 * l_fc
