"""Hot-loop kernels with two interchangeable backends.

PIMKIT_BACKEND picks the implementation at import time:

    auto   use numba if it imports, else numpy (default)
    numba  require the numba JIT backend
    numpy  force the pure-numpy fallback

Both backends expose the same functions with bit-identical results; the
execution semantics live in vm.py, these are just the inner loops.
"""

from __future__ import annotations

import os

from ._numpy import ADD, MAX, MUL, SIGM, SLL, SRA, SUB, TANH

_env = os.environ.get("PIMKIT_BACKEND", "auto").strip().lower()
if _env not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"PIMKIT_BACKEND must be 'auto', 'numba' or 'numpy', not {_env!r}")

if _env == "numpy":
    from . import _numpy as _impl
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl  # type: ignore[no-redef]
        BACKEND = "numba"
    except ImportError:
        if _env == "numba":
            raise
        from . import _numpy as _impl  # type: ignore[no-redef]
        BACKEND = "numpy"

read_elems = _impl.read_elems
read_elems_strided = _impl.read_elems_strided
write_elems = _impl.write_elems
elementwise = _impl.elementwise
relu_i64 = _impl.relu_i64
mvmul_i64 = _impl.mvmul_i64
act_q = _impl.act_q


def dot_u64(a, b) -> int:
    return int(_impl.dot_u64(a, b))


def fnv1a64(data) -> int:
    return int(_impl.fnv1a64(data))


__all__ = [
    "ADD", "SUB", "MUL", "MAX", "SLL", "SRA", "TANH", "SIGM", "BACKEND",
    "read_elems", "read_elems_strided", "write_elems", "elementwise",
    "relu_i64", "mvmul_i64", "act_q", "dot_u64", "fnv1a64",
]
