"""Readers and writers for annotations, detections, masks and feature tensors.

Text formats:

* ICDAR quad: ``x1,y1,...,x4,y4,transcription`` (``###`` marks don't-care).
* TD500 rotated box: ``index difficult x y w h theta`` (theta in radians).
* Detections: ``x1,y1,...,xn,yn,score``; integer coordinates, 4-decimal score.

Binary formats:

* FMAP: ``b"FMAP"``, then little-endian u32 version (=1), channels, height,
  width, then ``C*H*W`` little-endian float32 values, channel-major.
* PGM: binary ``P5`` with maxval 255; any nonzero pixel reads as foreground.
"""
from __future__ import annotations

import math
import re
import struct
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .errors import (MagicError, ParseError, PayloadLengthError, UnsupportedFormatError,
                     VersionError, FormatError)
from .pipeline import Annotation, Detection

DATASET_KINDS = ("icdar-quad", "td500-rotbox")

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
_FMAP_HEADER = struct.Struct("<4s4I")


def _clean(line: str) -> str:
    return line.lstrip("﻿").rstrip("\r\n")


def _floats(fields, lineno):
    try:
        vals = [float(v) for v in fields]
    except ValueError:
        raise ParseError(f"non-numeric coordinate in {fields!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite coordinate", lineno)
    return vals


def parse_icdar(line: str, lineno: int | None = None) -> Annotation:
    """Parse one ICDAR quad line. The transcription may itself contain commas."""
    fields = _clean(line).split(",")
    if len(fields) < 9:
        raise ParseError(f"expected at least 9 comma-separated fields, got {len(fields)}", lineno)
    coords = _floats(fields[:8], lineno)
    text = ",".join(fields[8:])
    poly = np.array(coords).reshape(4, 2)
    try:
        return Annotation.from_text(poly, text)
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def write_icdar(ann: Annotation) -> str:
    coords = ",".join(_fmt(v) for v in np.asarray(ann.polygon).ravel())
    text = "###" if ann.ignore else ann.transcription
    return f"{coords},{text}"


def parse_td500(line: str, lineno: int | None = None) -> Annotation:
    """Parse ``index difficult x y w h theta`` into a rotated quad."""
    fields = _clean(line).split()
    if len(fields) != 7:
        raise ParseError(f"expected 7 space-separated fields, got {len(fields)}", lineno)
    if fields[1] not in ("0", "1"):
        raise ParseError(f"difficult flag must be 0 or 1, got {fields[1]!r}", lineno)
    try:
        int(fields[0])
    except ValueError:
        raise ParseError(f"index must be an integer, got {fields[0]!r}", lineno) from None
    x, y, w, h, theta = _floats(fields[2:], lineno)
    if w <= 0 or h <= 0:
        raise ParseError("box width and height must be positive", lineno)
    difficult = fields[1] == "1"
    return Annotation(rotbox_polygon(x, y, w, h, theta), "###" if difficult else "", difficult,
                      rotbox=(x, y, w, h, theta))


def rotbox_polygon(x, y, w, h, theta) -> np.ndarray:
    """Corners of the ``w x h`` box at ``(x, y)`` rotated by ``theta`` about its center."""
    cx, cy = x + w / 2, y + h / 2
    corners = np.array([[x, y], [x + w, y], [x + w, y + h], [x, y + h]]) - (cx, cy)
    c, s = math.cos(theta), math.sin(theta)
    return corners @ np.array([[c, -s], [s, c]]).T + (cx, cy)


def write_td500(ann: Annotation, index: int = 0) -> str:
    """Inverse of :func:`parse_td500`.

    Parsed annotations keep their source box, which is written back verbatim
    while it still produces the polygon; otherwise the box is recovered from
    the first two edges.
    """
    p = np.asarray(ann.polygon, dtype=np.float64)
    if p.shape != (4, 2):
        raise FormatError("TD500 boxes need exactly four vertices")
    if ann.rotbox is not None and np.array_equal(rotbox_polygon(*ann.rotbox), p):
        vals = ann.rotbox
    else:
        e0 = p[1] - p[0]
        e1 = p[2] - p[1]
        w = math.hypot(*e0)
        h = math.hypot(*e1)
        theta = math.atan2(e0[1], e0[0])
        cx, cy = p.mean(axis=0)
        vals = (cx - w / 2, cy - h / 2, w, h, theta)
    return f"{index} {int(ann.ignore)} " + " ".join(repr(float(v)) for v in vals)


def read_annotations(path, kind: str = "icdar-quad") -> list[Annotation]:
    parse = {"icdar-quad": parse_icdar, "td500-rotbox": parse_td500}.get(kind)
    if parse is None:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    anns = []
    text = Path(path).read_text(encoding="utf-8-sig")
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip():
            anns.append(parse(line, i))
    return anns


def _round_half_away(v: float) -> int:
    return int(Decimal(repr(float(v))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def write_detections(dets) -> str:
    """One line per detection, highest score first; empty string for no detections."""
    out = []
    for det in sorted(dets, key=lambda d: -d.score):
        coords = ",".join(str(_round_half_away(v)) for v in np.asarray(det.polygon).ravel())
        out.append(f"{coords},{det.score:.4f}\n")
    return "".join(out)


def parse_detection(line: str, lineno: int | None = None) -> Detection:
    fields = _clean(line).split(",")
    if len(fields) < 7 or len(fields) % 2 == 0:
        raise ParseError(f"expected 2n coordinates plus a score (n >= 3), got {len(fields)} fields", lineno)
    vals = _floats(fields, lineno)
    try:
        return Detection(np.array(vals[:-1]).reshape(-1, 2), vals[-1])
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def read_detections(text: str) -> list[Detection]:
    return [parse_detection(line, i) for i, line in enumerate(_clean(text).splitlines(), 1) if line.strip()]


def write_fmap(fmap) -> bytes:
    arr = np.asarray(fmap)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise FormatError(f"feature map must be (C, H, W), got shape {arr.shape}")
    c, h, w = arr.shape
    header = _FMAP_HEADER.pack(FMAP_MAGIC, FMAP_VERSION, c, h, w)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def read_fmap(data: bytes) -> np.ndarray:
    """Decode an FMAP blob to a ``(C, H, W)`` float32 array."""
    if len(data) < 4 or data[:4] != FMAP_MAGIC:
        raise MagicError(f"bad magic {bytes(data[:4])!r}, expected {FMAP_MAGIC!r}")
    if len(data) < _FMAP_HEADER.size:
        raise PayloadLengthError(f"truncated header: {len(data)} bytes")
    _, version, c, h, w = _FMAP_HEADER.unpack_from(data)
    if version != FMAP_VERSION:
        raise VersionError(f"unsupported FMAP version {version}")
    expected = c * h * w * 4
    payload = len(data) - _FMAP_HEADER.size
    if payload != expected:
        raise PayloadLengthError(f"payload is {payload} bytes, header implies {expected} ({c}x{h}x{w} floats)")
    return np.frombuffer(data, dtype="<f4", offset=_FMAP_HEADER.size).reshape(c, h, w).astype(np.float32)


def write_pgm(mask) -> bytes:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise FormatError(f"mask must be 2-D, got shape {m.shape}")
    h, w = m.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.where(m.astype(bool), 255, 0).astype(np.uint8).tobytes()


_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary P5 PGM to a bool mask (nonzero = foreground)."""
    if data[:2] in (b"P2", b"P1", b"P3", b"P4", b"P6"):
        raise UnsupportedFormatError(f"unsupported PNM variant {data[:2].decode()!r}; only binary P5 is read")
    if data[:2] != b"P5":
        raise FormatError("not a PGM file (missing P5 magic)")
    pos = 2
    vals = []
    for _ in range(3):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise FormatError(f"malformed PGM header at byte {pos}")
        try:
            vals.append(int(m.group(1)))
        except ValueError:
            raise FormatError(f"malformed PGM header field {m.group(1)!r} at byte {m.start(1)}") from None
        pos = m.end()
    w, h, maxval = vals
    if w <= 0 or h <= 0:
        raise FormatError(f"bad PGM size {w}x{h}")
    if maxval != 255:
        raise UnsupportedFormatError(f"PGM maxval must be 255, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"missing whitespace after PGM header at byte {pos}")
    pos += 1
    body = data[pos:]
    if len(body) != w * h:
        raise FormatError(f"PGM payload is {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w) != 0


_STEM_NUMBER = re.compile(r"(\d+)$")


def image_number(path) -> str | None:
    """Numeric stem of ``img_N.*``, ``gt_img_N.*`` or ``res_img_N.txt``."""
    stem = Path(path).stem
    m = _STEM_NUMBER.search(stem)
    return m.group(1) if m and "img_" in stem else None


def pair_files(gt_dir, det_dir) -> list[tuple[str, Path, Path | None]]:
    """Pair annotation files with ``res_img_N.txt`` detections by numeric stem.

    Annotation files without a detection file pair with ``None`` (all FN).
    """
    dets = {}
    for p in Path(det_dir).iterdir():
        n = image_number(p)
        if n is not None and p.name.startswith("res_"):
            dets[n] = p
    out = []
    for p in sorted(Path(gt_dir).iterdir()):
        n = image_number(p)
        if n is None or not p.is_file():
            continue
        out.append((n, p, dets.get(n)))
    return sorted(out, key=lambda t: int(t[0]))
