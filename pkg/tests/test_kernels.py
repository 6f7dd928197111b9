import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pimkit import kernels
from pimkit.kernels import _numpy
from pimkit.oracle import _activation

try:
    from pimkit.kernels import _numba
except ImportError:
    _numba = None

needs_numba = pytest.mark.skipif(_numba is None, reason="numba not importable")


@given(st.integers(1, 32), st.lists(st.integers(), min_size=1, max_size=20))
@settings(max_examples=300)
def test_element_codec_roundtrip_any_width(biw, raw):
    """write_elems then read_elems is the identity on in-range values."""
    lo, hi = -(1 << (biw - 1)), (1 << (biw - 1)) - 1
    vals = np.array([lo + v % (hi - lo + 1) for v in raw], np.int64)
    ebytes = (biw + 7) // 8
    mem = np.zeros(len(vals) * ebytes + 8, np.uint8)
    _numpy.write_elems(mem, 4, vals, ebytes, biw)
    got = _numpy.read_elems(mem, 4, len(vals), ebytes, biw)
    assert got.tolist() == vals.tolist()
    # bits above biw stay zero in storage
    if biw % 8:
        dead = 0xFF << (biw % 8) & 0xFF
        assert all((mem[4 + i * ebytes + ebytes - 1] & dead) == 0
                   for i in range(len(vals)))


def test_write_elems_masks_out_of_range_values():
    mem = np.zeros(4, np.uint8)
    _numpy.write_elems(mem, 0, np.array([300], np.int64), 1, 8)
    assert mem[0] == 300 & 0xFF


def test_fnv1a64_known_vectors():
    # offset basis and single-byte value from the FNV-1a definition
    assert kernels.fnv1a64(np.frombuffer(b"", np.uint8)) == 0xCBF29CE484222325
    assert kernels.fnv1a64(np.frombuffer(b"a", np.uint8)) == 0xAF63DC4C8601EC8C
    data = np.frombuffer(b"pim", np.uint8)
    acc = 0xCBF29CE484222325
    for b in b"pim":
        acc = ((acc ^ b) * 0x100000001B3) & (1 << 64) - 1
    assert kernels.fnv1a64(data) == acc


def test_dot_u64_wraps_mod_2_64():
    big = (1 << 31) - 1
    a = np.array([big] * 9, np.int64)
    out = kernels.dot_u64(a, a)
    assert out == (9 * big * big) & ((1 << 64) - 1)
    neg = np.array([-big] * 9, np.int64)
    assert kernels.dot_u64(a, neg) == (-9 * big * big) & ((1 << 64) - 1)


def test_act_q_matches_scalar_oracle():
    rng = random.Random(0)
    for kind, name in ((kernels.TANH, "tanh"), (kernels.SIGM, "sigm")):
        for _ in range(200):
            biw = rng.randint(2, 16)
            fi, fo = rng.randint(0, 12), rng.randint(0, 12)
            lo, hi = -(1 << (biw - 1)), (1 << (biw - 1)) - 1
            v = rng.randint(lo, hi)
            got = _numpy.act_q(kind, np.array([v], np.int64), fi, fo, lo, hi)
            assert got[0] == _activation(name, v, fi, fo, biw), \
                (name, v, fi, fo, biw)


def test_elementwise_kinds():
    a = np.array([100, -100, 7], np.int64)
    b = np.array([100, -100, 3], np.int64)
    assert _numpy.elementwise(kernels.ADD, a, b, 8).tolist() == [-56, 56, 10]
    assert _numpy.elementwise(kernels.SUB, a, b, 8).tolist() == [0, 0, 4]
    assert _numpy.elementwise(kernels.MUL, a, b, 16).tolist() == [10000, 10000, 21]
    assert _numpy.elementwise(kernels.MAX, a, b, 8).tolist() == [100, -100, 7]
    s = np.array([1, 1, 70], np.int64)
    assert _numpy.elementwise(kernels.SLL, a, s, 8).tolist() == [-56, 56, 0]
    assert _numpy.elementwise(kernels.SRA, a, s, 8).tolist() == [50, -50, 0]
    # arithmetic right shift of a negative value saturates at -1
    assert _numpy.elementwise(
        kernels.SRA, np.array([-1], np.int64), s[2:], 8).tolist() == [-1]


def rand_case(rng):
    biw = rng.randint(1, 32)
    n = rng.randint(1, 64)
    lo, hi = -(1 << (biw - 1)), (1 << (biw - 1)) - 1
    vals = np.array([rng.randint(lo, hi) for _ in range(n)], np.int64)
    return biw, (biw + 7) // 8, vals


@needs_numba
def test_backends_bit_identical():
    rng = random.Random(42)
    for _ in range(50):
        biw, ebytes, vals = rand_case(rng)
        mem_a = np.zeros(len(vals) * ebytes + 16, np.uint8)
        mem_b = mem_a.copy()
        _numpy.write_elems(mem_a, 8, vals, ebytes, biw)
        _numba.write_elems(mem_b, 8, vals, ebytes, biw)
        assert mem_a.tolist() == mem_b.tolist()
        ra = _numpy.read_elems(mem_a, 8, len(vals), ebytes, biw)
        rb = _numba.read_elems(mem_b, 8, len(vals), ebytes, biw)
        assert ra.tolist() == rb.tolist()

    for _ in range(50):
        biw, _, a = rand_case(rng)
        b = np.array([random.Random(biw).randint(0, 40) for _ in a], np.int64)
        for kind in (kernels.ADD, kernels.SUB, kernels.MUL, kernels.MAX,
                     kernels.SLL, kernels.SRA):
            x = _numpy.elementwise(kind, a, b, biw)
            y = _numba.elementwise(kind, a, b, biw)
            assert x.tolist() == y.tolist(), (kind, biw)

    for _ in range(20):
        rows, cols = rng.randint(1, 8), rng.randint(1, 8)
        w = np.array([[rng.randint(-100, 100) for _ in range(cols)]
                      for _ in range(rows)], np.int64)
        x = np.array([rng.randint(-128, 127) for _ in range(cols)], np.int64)
        ya = _numpy.mvmul_i64(w, x, 1, -128, 127)
        yb = _numba.mvmul_i64(w, x, 1, -128, 127)
        assert ya.tolist() == yb.tolist()
        assert int(_numpy.dot_u64(x, x)) == int(_numba.dot_u64(x, x))

    for kind in (kernels.TANH, kernels.SIGM):
        for _ in range(50):
            biw, _, vals = rand_case(rng)
            lo, hi = -(1 << (biw - 1)), (1 << (biw - 1)) - 1
            fi, fo = rng.randint(0, 12), rng.randint(0, 12)
            xa = _numpy.act_q(kind, vals, fi, fo, lo, hi)
            xb = _numba.act_q(kind, vals, fi, fo, lo, hi)
            assert xa.tolist() == xb.tolist()

    blob = np.frombuffer(random.Random(1).randbytes(4096), np.uint8)
    assert int(_numpy.fnv1a64(blob)) == int(_numba.fnv1a64(blob))


@needs_numba
def test_strided_read_matches():
    rng = random.Random(7)
    mem = np.frombuffer(rng.randbytes(256), np.uint8).copy()
    for stride in (1, 2, 3, 5):
        a = _numpy.read_elems_strided(mem, 4, 10, stride, 1, 8)
        b = _numba.read_elems_strided(mem, 4, 10, stride, 1, 8)
        assert a.tolist() == b.tolist()


def test_backend_reports_selection():
    assert kernels.BACKEND in ("numpy", "numba")
