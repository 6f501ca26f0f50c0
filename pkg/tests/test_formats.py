import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simtext.errors import (FormatError, MagicError, ParseError, PayloadLengthError,
                            UnsupportedFormatError, VersionError)
from simtext.formats import (image_number, pair_files, parse_detection, parse_icdar, parse_td500,
                             read_annotations, read_detections, read_fmap, read_pgm, write_detections,
                             write_fmap, write_icdar, write_pgm, write_td500)
from simtext.pipeline import Detection

SQUARE = [[0, 0], [10, 0], [10, 10], [0, 10]]


def test_parse_icdar_examples():
    a = parse_icdar("0,0,10,0,10,10,0,10,hello")
    assert a.polygon.tolist() == SQUARE and a.transcription == "hello" and not a.ignore
    assert parse_icdar("0,0,10,0,10,10,0,10,###").ignore
    with pytest.raises(ParseError, match="line 3"):
        parse_icdar("1,2,3", 3)
    with pytest.raises(ParseError):
        parse_icdar("0,0,x,0,10,10,0,10,t")
    with pytest.raises(ParseError):
        parse_icdar("0,0,nan,0,10,10,0,10,t")


def test_parse_icdar_bom_cr_and_commas():
    a = parse_icdar("﻿0,0,10,0,10,10,0,10,a,b\r\n")
    assert a.polygon.tolist() == SQUARE and a.transcription == "a,b"
    assert parse_icdar("0,0,10,0,10,10,0,10,t\r").transcription == "t"


def test_parse_td500_examples():
    a = parse_td500("0 0 0 0 10 10 0")
    np.testing.assert_allclose(a.polygon, SQUARE, atol=1e-12)
    assert not a.ignore
    b = parse_td500("0 1 0 0 10 10 0")
    assert b.ignore and b.polygon.tolist() == a.polygon.tolist()
    r = parse_td500("0 0 0 0 10 4 1.5708")
    np.testing.assert_allclose(r.polygon, [(7, -3), (7, 7), (3, 7), (3, -3)], atol=1e-3)
    for bad in ("0 0 0 0 10 10", "0 2 0 0 10 10 0", "0 0 0 0 a 10 0", "x 0 0 0 10 10 0", "0 0 0 0 -1 5 0"):
        with pytest.raises(ParseError):
            parse_td500(bad, 1)


def test_write_detections_examples():
    assert write_detections([Detection(SQUARE, 0.9)]) == "0,0,10,0,10,10,0,10,0.9000\n"
    assert write_detections([]) == ""
    text = write_detections([Detection(np.array(SQUARE) + 0.5, 0.3), Detection(np.array(SQUARE) - 0.5, 0.8)])
    lines = text.splitlines()
    # half away from zero: 0.5 -> 1, -0.5 -> -1, 10.5 -> 11, 9.5 -> 10
    assert lines[0] == "-1,-1,10,-1,10,10,-1,10,0.8000"
    assert lines[1] == "1,1,11,1,11,11,1,11,0.3000"
    back = read_detections(text)
    assert [d.polygon.tolist() for d in back] == [[[-1, -1], [10, -1], [10, 10], [-1, 10]],
                                                  [[1, 1], [11, 1], [11, 11], [1, 11]]]
    assert write_detections(back) == text
    with pytest.raises(ParseError):
        parse_detection("1,2,3,4,0.5")
    with pytest.raises(ParseError):
        parse_detection("0,0,10,0,10,10,1.5")


def _random_icdar_line(rng):
    coords = rng.integers(-50, 2000, size=8).astype(float)
    coords[rng.random(8) < 0.3] += 0.25
    text = rng.choice(["hello", "###", "a,b", "Straße", "", "x y"])
    return ",".join(str(int(v)) if v.is_integer() else repr(float(v)) for v in coords) + "," + text


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_icdar_fixpoint(seed):
    rng = np.random.default_rng(seed)
    line = _random_icdar_line(rng)
    a = parse_icdar(line)
    out = write_icdar(a)
    b = parse_icdar(out)
    assert write_icdar(b) == out
    assert b.polygon.tolist() == a.polygon.tolist() and b.ignore == a.ignore


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_td500_fixpoint(seed):
    rng = np.random.default_rng(seed)
    x, y = map(float, rng.uniform(-10, 500, 2))
    w, h = map(float, rng.uniform(1, 300, 2))
    line = f"{rng.integers(0, 50)} {rng.integers(0, 2)} {x!r} {y!r} {w!r} {h!r} {float(rng.uniform(-1.5, 1.5))!r}"
    a = parse_td500(line)
    b = parse_td500(write_td500(a))
    np.testing.assert_allclose(b.polygon, a.polygon, atol=1e-9)
    assert b.ignore == a.ignore


def test_fmap_examples():
    t = np.random.default_rng(0).normal(size=(2, 3, 4)).astype(np.float32)
    data = write_fmap(t)
    back = read_fmap(data)
    assert back.dtype == np.float32 and back.tobytes() == t.tobytes()
    assert write_fmap(back) == data
    assert read_fmap(write_fmap(t[0])).shape == (1, 3, 4)
    with pytest.raises(MagicError):
        read_fmap(b"XMAP" + data[4:])
    with pytest.raises(PayloadLengthError):
        read_fmap(data[:-4])
    with pytest.raises(PayloadLengthError):
        read_fmap(data[:10])
    with pytest.raises(VersionError):
        read_fmap(struct.pack("<4s4I", b"FMAP", 2, 2, 3, 4) + data[20:])
    assert struct.unpack_from("<4s4I", data) == (b"FMAP", 1, 2, 3, 4)


def test_pgm_examples():
    m = np.array([[True, False], [False, True]])
    data = write_pgm(m)
    assert data == b"P5\n2 2\n255\n\xff\x00\x00\xff"
    np.testing.assert_array_equal(read_pgm(data), m)
    assert read_pgm(b"P5\n2 1\n255\n\x80\x00").tolist() == [[True, False]]
    assert read_pgm(b"P5 # c\n2 1\n255\n\x01\x00").tolist() == [[True, False]]
    with pytest.raises(UnsupportedFormatError):
        read_pgm(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(UnsupportedFormatError):
        read_pgm(b"P5\n2 2\n65535\n" + bytes(8))
    for bad in (b"P5\n2\n", b"P5\nx 2\n255\n", b"P5\n2 2\n255\n\x00", b"JUNK"):
        with pytest.raises(FormatError):
            read_pgm(bad)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_pgm_fmap_bit_identity(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 20, 2)
    m = rng.random((h, w)) < 0.5
    data = write_pgm(m)
    assert write_pgm(read_pgm(data)) == data
    t = rng.normal(size=(rng.integers(1, 4), h, w)).astype(np.float32)
    assert write_fmap(read_fmap(write_fmap(t))) == write_fmap(t)


def test_read_annotations_and_pairing(tmp_path):
    gts = tmp_path / "gts"
    dets = tmp_path / "dets"
    gts.mkdir()
    dets.mkdir()
    (gts / "gt_img_2.txt").write_text("﻿0,0,10,0,10,10,0,10,a\r\n\n0,0,5,0,5,5,0,5,###\r\n", encoding="utf-8")
    (gts / "gt_img_10.txt").write_text("", encoding="utf-8")
    (dets / "res_img_2.txt").write_text("0,0,10,0,10,10,0,10,0.9000\n")
    (dets / "notes.txt").write_text("x")
    anns = read_annotations(gts / "gt_img_2.txt")
    assert len(anns) == 2 and anns[1].ignore
    pairs = pair_files(gts, dets)
    assert [(n, p.name, d.name if d else None) for n, p, d in pairs] == [
        ("2", "gt_img_2.txt", "res_img_2.txt"), ("10", "gt_img_10.txt", None)]
    assert image_number("img_7.jpg") == "7" and image_number("foo.txt") is None
    (gts / "gt_img_3.txt").write_text("0,0\n")
    with pytest.raises(ParseError, match="line 1"):
        read_annotations(gts / "gt_img_3.txt")
    with pytest.raises(ValueError):
        read_annotations(gts / "gt_img_2.txt", kind="coco")


def test_write_td500_without_source_box():
    from simtext.formats import rotbox_polygon
    from simtext.pipeline import Annotation
    poly = rotbox_polygon(3.0, 4.0, 30.0, 8.0, 0.4)
    line = write_td500(Annotation(poly, "", True), index=5)
    assert line.startswith("5 1 ")
    np.testing.assert_allclose(parse_td500(line).polygon, poly, atol=1e-9)
    moved = parse_td500("0 0 0 0 10 4 0.3")
    moved.polygon = moved.polygon + 1
    np.testing.assert_allclose(parse_td500(write_td500(moved)).polygon, moved.polygon, atol=1e-9)
