"""Numba-compiled kernels, signature-identical to the numpy backend.

Every function here must return bit-identical results to its _numpy twin;
tests/test_kernels.py enforces that. Scalar math.tanh/math.exp compile to
the same libm calls CPython makes, so activation outputs agree exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def read_elems(mem, base, n, ebytes, biw):
    out = np.empty(n, np.int64)
    full = np.int64(1) << np.int64(biw)
    half = full >> 1
    mask = full - 1
    for i in range(n):
        off = base + i * ebytes
        v = np.int64(0)
        for b in range(ebytes):
            v |= np.int64(mem[off + b]) << np.int64(8 * b)
        v &= mask
        if v >= half:
            v -= full
        out[i] = v
    return out


@njit(cache=True)
def read_elems_strided(mem, base, n, stride_bytes, ebytes, biw):
    out = np.empty(n, np.int64)
    full = np.int64(1) << np.int64(biw)
    half = full >> 1
    mask = full - 1
    for i in range(n):
        off = base + i * stride_bytes
        v = np.int64(0)
        for b in range(ebytes):
            v |= np.int64(mem[off + b]) << np.int64(8 * b)
        v &= mask
        if v >= half:
            v -= full
        out[i] = v
    return out


@njit(cache=True)
def write_elems(mem, base, vals, ebytes, biw):
    mask = (np.int64(1) << np.int64(biw)) - 1
    for i in range(vals.shape[0]):
        u = vals[i] & mask
        off = base + i * ebytes
        for b in range(ebytes):
            mem[off + b] = np.uint8((u >> np.int64(8 * b)) & 0xFF)


@njit(cache=True)
def elementwise(kind, a, b, biw):
    n = a.shape[0]
    out = np.empty(n, np.int64)
    full = np.int64(1) << np.int64(biw)
    half = full >> 1
    mask = full - 1
    for i in range(n):
        x = a[i]
        y = b[i]
        if kind == 0:
            r = x + y
        elif kind == 1:
            r = x - y
        elif kind == 2:
            r = x * y
        elif kind == 3:
            r = x if x >= y else y
        elif kind == 4:
            s = y if y < 63 else np.int64(63)
            r = np.int64(np.uint64(x) << np.uint64(s))
        else:
            s = y if y < 63 else np.int64(63)
            r = x >> s
        r &= mask
        if r >= half:
            r -= full
        out[i] = r
    return out


@njit(cache=True)
def relu_i64(a):
    out = np.empty(a.shape[0], np.int64)
    for i in range(a.shape[0]):
        out[i] = a[i] if a[i] > 0 else np.int64(0)
    return out


@njit(cache=True)
def mvmul_i64(w, x, relu, lo, hi):
    rows, cols = w.shape
    out = np.empty(rows, np.int64)
    for r in range(rows):
        acc = np.int64(0)
        for c in range(cols):
            acc += w[r, c] * x[c]
        if relu and acc < 0:
            acc = np.int64(0)
        if acc < lo:
            acc = np.int64(lo)
        elif acc > hi:
            acc = np.int64(hi)
        out[r] = acc
    return out


@njit(cache=True)
def dot_u64(a, b):
    acc = np.uint64(0)
    for i in range(a.shape[0]):
        acc += np.uint64(a[i]) * np.uint64(b[i])
    return acc


@njit(cache=True)
def act_q(kind, a, frac_in, frac_out, lo, hi):
    si = 2.0 ** -np.float64(frac_in)
    so = 2.0 ** np.float64(frac_out)
    out = np.empty(a.shape[0], np.int64)
    for i in range(a.shape[0]):
        v = a[i] * si
        if kind == 0:
            f = math.tanh(v)
        elif v >= 0.0:
            f = 1.0 / (1.0 + math.exp(-v))
        else:
            e = math.exp(v)
            f = e / (1.0 + e)
        x = f * so
        if x >= 0.0:
            r = np.int64(math.floor(x + 0.5))
        else:
            r = np.int64(math.ceil(x - 0.5))
        if r < lo:
            r = np.int64(lo)
        elif r > hi:
            r = np.int64(hi)
        out[i] = r
    return out


@njit(cache=True)
def fnv1a64(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h
