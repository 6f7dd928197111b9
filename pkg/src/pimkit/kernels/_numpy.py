"""Pure-numpy kernel implementations (fallback backend).

All element values travel as int64 arrays holding the sign-extended biw-bit
value; memory is a uint8 array of little-endian ebytes-wide cells with the
bits above biw kept zero.  The numba backend mirrors these signatures
exactly; results must match bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

# elementwise kinds
ADD, SUB, MUL, MAX, SLL, SRA = range(6)
# activation kinds
TANH, SIGM = 0, 1

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = 0x100000001B3


def _sext(v: np.ndarray, biw: int) -> np.ndarray:
    full = 1 << biw
    v = v & (full - 1)
    return np.where(v >= (full >> 1), v - full, v)


def read_elems(mem: np.ndarray, base: int, n: int, ebytes: int, biw: int) -> np.ndarray:
    chunk = mem[base:base + n * ebytes].reshape(n, ebytes).astype(np.int64)
    shifts = (np.arange(ebytes, dtype=np.int64) * 8)
    return _sext((chunk << shifts).sum(axis=1), biw)


def read_elems_strided(mem: np.ndarray, base: int, n: int, stride_bytes: int,
                       ebytes: int, biw: int) -> np.ndarray:
    starts = base + np.arange(n, dtype=np.int64) * stride_bytes
    cols = np.arange(ebytes, dtype=np.int64)
    chunk = mem[(starts[:, None] + cols)].astype(np.int64)
    return _sext((chunk << (cols * 8)).sum(axis=1), biw)


def write_elems(mem: np.ndarray, base: int, vals: np.ndarray,
                ebytes: int, biw: int) -> None:
    u = (vals & ((1 << biw) - 1)).astype(np.uint64)
    view = mem[base:base + len(vals) * ebytes].reshape(len(vals), ebytes)
    for b in range(ebytes):
        view[:, b] = (u >> np.uint64(8 * b)).astype(np.uint8)


def elementwise(kind: int, a: np.ndarray, b: np.ndarray, biw: int) -> np.ndarray:
    if kind == ADD:
        r = a + b
    elif kind == SUB:
        r = a - b
    elif kind == MUL:
        r = a * b
    elif kind == MAX:
        r = np.maximum(a, b)
    elif kind == SLL:
        s = np.minimum(b, 63).astype(np.uint64)
        r = (a.astype(np.uint64) << s).astype(np.int64)
    else:  # SRA: int64 >> is sign-propagating
        s = np.minimum(b, 63)
        r = a >> s
    return _sext(r, biw)


def relu_i64(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0)


def mvmul_i64(w: np.ndarray, x: np.ndarray, relu: int, lo: int, hi: int) -> np.ndarray:
    y = w @ x
    if relu:
        y = np.maximum(y, 0)
    return np.clip(y, lo, hi)


def dot_u64(a: np.ndarray, b: np.ndarray) -> int:
    return int((a.astype(np.uint64) * b.astype(np.uint64)).sum(dtype=np.uint64))


def act_q(kind: int, a: np.ndarray, frac_in: int, frac_out: int,
          lo: int, hi: int) -> np.ndarray:
    # deliberately scalar math.tanh/exp per element: numpy's vectorized tanh
    # may diverge from libm in the last ulp, the scalar calls do not
    si = 2.0 ** -frac_in
    so = 2.0 ** frac_out
    out = np.empty(len(a), np.int64)
    for i in range(len(a)):
        v = a[i] * si
        if kind == TANH:
            f = math.tanh(v)
        elif v >= 0.0:
            f = 1.0 / (1.0 + math.exp(-v))
        else:
            e = math.exp(v)
            f = e / (1.0 + e)
        x = f * so
        r = math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)
        out[i] = min(max(r, lo), hi)
    return out


def fnv1a64(data: np.ndarray) -> int:
    h = int(_FNV_OFFSET)
    mask = (1 << 64) - 1
    for byte in data.tobytes():
        h = ((h ^ byte) * _FNV_PRIME) & mask
    return h
