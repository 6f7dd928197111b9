"""Program bundle: per-core code, logical arrays, array groups, memory config.

The on-disk format is a JSON manifest (`.pimbundle.json`). Code is stored as
assembly text lines, weights inline as integer arrays or in external `.wbin`
files (little-endian int32, row-major) referenced by relative path:

    {
      "format": "pimbundle", "version": 1, "mode": 64,
      "global_mem_bytes": 16777216,
      "variable_bitwidth_supported": true,
      "global_mem_init": [[0, "0a0b0c"]],
      "cores": [
        {"core_id": 0,
         "code": ["sldi $r1, 4", "mvmul $r2, $r1, 8, 0, 0"],
         "arrays": [{"array_id": 0, "rows": 2, "cols": 2,
                     "weights": [[1, 0], [0, 1]]}],
         "groups": [{"group_id": 0, "total_rows": 2, "total_cols": 2,
                     "tiles": [[0, 0, 0]]}]}
      ]
    }

Only logical arrays appear here. Positive/negative weight pairs and other
physical-array composition details are a hardware concern and are never
represented.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

from . import asm
from .isa import EncodingMode, Instruction, IsaError, Op, encode, validate

DEFAULT_LOCAL_MEM = 262144
DEFAULT_GLOBAL_MEM = 16777216
DEFAULT_EVENT_REGS = 16
DEFAULT_BIW = 8

# instructions that require variable bit-width hardware support
BITWIDTH_OPS = (Op.SETBW, Op.VRSU, Op.VRSL)

_INT32_MIN, _INT32_MAX = -(1 << 31), (1 << 31) - 1


@dataclass(frozen=True)
class ManifestError:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class UnknownGroupError(KeyError):
    pass


@dataclass
class LogicalArray:
    array_id: int
    rows: int
    cols: int
    weights: list[list[int]]


@dataclass
class ArrayGroup:
    group_id: int
    tiles: list[tuple[int, int, int]]  # (array_id, row_offset, col_offset)
    total_rows: int
    total_cols: int


@dataclass
class CoreConfig:
    core_id: int
    code: list[Instruction]
    local_mem_bytes: int = DEFAULT_LOCAL_MEM
    event_register_count: int = DEFAULT_EVENT_REGS
    arrays: list[LogicalArray] = field(default_factory=list)
    groups: list[ArrayGroup] = field(default_factory=list)
    initial_ibiw: int = DEFAULT_BIW
    initial_obiw: int = DEFAULT_BIW
    _group_cache: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass
class ProgramBundle:
    mode: EncodingMode
    cores: list[CoreConfig]
    global_mem_bytes: int = DEFAULT_GLOBAL_MEM
    global_mem_init: list[tuple[int, bytes]] = field(default_factory=list)
    activation_qformat: tuple[int, int] | None = None  # None = biw-2 at use
    variable_bitwidth_supported: bool = True


def assemble_group_matrix(core: CoreConfig, group_id: int) -> list[list[int]]:
    """Scatter a group's tiles into the total_rows x total_cols matrix.

    Element (r, c) comes from the unique tile covering it; the result is
    cached on the core. Raises UnknownGroupError for a bad group_id.
    """
    cached = core._group_cache.get(group_id)
    if cached is not None:
        return cached
    group = next((g for g in core.groups if g.group_id == group_id), None)
    if group is None:
        raise UnknownGroupError(group_id)
    arrays = {a.array_id: a for a in core.arrays}
    mat = [[0] * group.total_cols for _ in range(group.total_rows)]
    for array_id, roff, coff in group.tiles:
        arr = arrays[array_id]
        for r in range(arr.rows):
            mat[roff + r][coff : coff + arr.cols] = arr.weights[r]
    core._group_cache[group_id] = mat
    return mat


# ---------------------------------------------------------------- validation

def validate_bundle(bundle: ProgramBundle) -> list[ManifestError]:
    """Semantic cross-checks on an already constructed bundle."""
    errs: list[ManifestError] = []

    def err(path: str, msg: str) -> None:
        errs.append(ManifestError(path, msg))

    if bundle.mode not in (EncodingMode.WORD64, EncodingMode.WORD32):
        err("$.mode", f"mode must be 64 or 32, got {bundle.mode}")
    if bundle.global_mem_bytes < 0:
        err("$.global_mem_bytes", "must be non-negative")
    if bundle.activation_qformat is not None:
        fi, fo = bundle.activation_qformat
        if not (0 <= fi <= 31 and 0 <= fo <= 31):
            err("$.activation_qformat", f"fractional bits out of range: ({fi}, {fo})")
    for k, (addr, blob) in enumerate(bundle.global_mem_init):
        if addr < 0 or addr + len(blob) > bundle.global_mem_bytes:
            err(f"$.global_mem_init[{k}]",
                f"region [{addr}, {addr + len(blob)}) outside global memory "
                f"of {bundle.global_mem_bytes} bytes")

    n_cores = len(bundle.cores)
    evs = {i: c.event_register_count for i, c in enumerate(bundle.cores)}
    for i, core in enumerate(bundle.cores):
        base = f"$.cores[{i}]"
        if core.core_id != i:
            err(f"{base}.core_id", f"core ids must be dense from 0, got {core.core_id}")
        if core.local_mem_bytes < 1:
            err(f"{base}.local_mem_bytes", "must be positive")
        if core.event_register_count < 0:
            err(f"{base}.event_register_count", "must be non-negative")
        for name in ("initial_ibiw", "initial_obiw"):
            v = getattr(core, name)
            if not 1 <= v <= 32:
                err(f"{base}.{name}", f"bit width must be in [1, 32], got {v}")

        amax: dict[int, tuple[int, int]] = {}
        for j, arr in enumerate(core.arrays):
            apath = f"{base}.arrays[{j}]"
            if arr.array_id != j:
                err(f"{apath}.array_id", f"array ids must be dense from 0, got {arr.array_id}")
            if arr.rows < 1 or arr.cols < 1:
                err(f"{apath}", f"rows and cols must be >= 1, got {arr.rows}x{arr.cols}")
                continue
            if len(arr.weights) != arr.rows or any(len(r) != arr.cols for r in arr.weights):
                err(f"{apath}.weights", f"shape does not match {arr.rows}x{arr.cols}")
                continue
            lo = min(min(r) for r in arr.weights)
            hi = max(max(r) for r in arr.weights)
            if lo < _INT32_MIN or hi > _INT32_MAX:
                err(f"{apath}.weights", "weights must fit signed 32-bit")
            amax[arr.array_id] = (lo, hi)

        group_ids = set()
        for j, grp in enumerate(core.groups):
            gpath = f"{base}.groups[{j}]"
            if grp.group_id != j:
                err(f"{gpath}.group_id", f"group ids must be dense from 0, got {grp.group_id}")
            group_ids.add(grp.group_id)
            if grp.total_rows < 1 or grp.total_cols < 1:
                err(gpath, f"total size must be >= 1x1, got {grp.total_rows}x{grp.total_cols}")
                continue
            _check_tiling(core, grp, gpath, err)

        for k, instr in enumerate(core.code):
            cpath = f"{base}.code[{k}]"
            for v in validate(instr):
                err(cpath, str(v))
            try:
                encode(instr, bundle.mode)
            except IsaError as e:
                err(cpath, f"not encodable in {int(bundle.mode)}-bit mode: {e}")
            op = instr.op
            if not bundle.variable_bitwidth_supported and op in BITWIDTH_OPS:
                err(cpath, f"{Op(op).mnemonic} is invalid: hardware does not "
                           "support variable bit-width")
            if op == Op.MVMUL:
                if instr.imm_group not in group_ids:
                    err(cpath, f"mvmul references unknown group {instr.imm_group}")
                else:
                    grp = core.groups[instr.imm_group]
                    bound = 1 << (instr.mbiw - 1) if instr.mbiw >= 1 else 0
                    for aid, _, _ in grp.tiles:
                        if aid in amax:
                            lo, hi = amax[aid]
                            if lo < -bound or hi > bound - 1:
                                err(cpath,
                                    f"array {aid} weights [{lo}, {hi}] exceed "
                                    f"mbiw={instr.mbiw} range [{-bound}, {bound - 1}]")
            elif op in (Op.SEND, Op.RECV):
                if instr.imm_core >= n_cores:
                    err(cpath, f"{Op(op).mnemonic} names unknown core {instr.imm_core}")
                elif instr.imm_core == core.core_id:
                    err(cpath, f"{Op(op).mnemonic} target must be a different core")
            elif op == Op.SYNC:
                if instr.imm_core >= n_cores:
                    err(cpath, f"sync names unknown core {instr.imm_core}")
                elif instr.imm_ev >= evs[instr.imm_core]:
                    err(cpath, f"event {instr.imm_ev} out of range for core "
                               f"{instr.imm_core}")
            elif op == Op.WAIT and instr.imm_ev >= core.event_register_count:
                err(cpath, f"event {instr.imm_ev} out of range")
    return errs


def _check_tiling(core: CoreConfig, grp: ArrayGroup, gpath: str, err) -> None:
    arrays = {a.array_id: a for a in core.arrays}
    rows, cols = grp.total_rows, grp.total_cols
    cover = bytearray(rows * cols)
    for t, (aid, roff, coff) in enumerate(grp.tiles):
        tpath = f"{gpath}.tiles[{t}]"
        arr = arrays.get(aid)
        if arr is None:
            err(tpath, f"tile references unknown array {aid}")
            continue
        if roff < 0 or coff < 0 or roff + arr.rows > rows or coff + arr.cols > cols:
            err(tpath, f"tile {arr.rows}x{arr.cols} at ({roff}, {coff}) extends "
                       f"outside {rows}x{cols}")
            continue
        for r in range(roff, roff + arr.rows):
            base = r * cols
            for c in range(coff, coff + arr.cols):
                if cover[base + c]:
                    err(tpath, f"tile overlaps earlier tile at ({r}, {c})")
                    return
                cover[base + c] = 1
    if not all(cover):
        hole = cover.index(0)
        err(gpath, f"tiles leave a gap at ({hole // cols}, {hole % cols})")


# ------------------------------------------------------------------- parsing

class _Reader:
    """JSON tree walker that records structured errors instead of raising."""

    def __init__(self):
        self.errors: list[ManifestError] = []

    def err(self, path: str, msg: str) -> None:
        self.errors.append(ManifestError(path, msg))

    def get(self, obj: dict, key: str, path: str, types, default=None, required=False):
        if key not in obj:
            if required:
                self.err(f"{path}.{key}", "missing required key")
            return default
        val = obj[key]
        # bool is an int subclass; keep the two apart
        if not isinstance(val, types) or (types is int and isinstance(val, bool)):
            self.err(f"{path}.{key}", f"expected {getattr(types, '__name__', types)}, "
                                      f"got {type(val).__name__}")
            return default
        return val


def _parse_array(rd: _Reader, obj, path: str, base_dir: Path | None) -> LogicalArray | None:
    if not isinstance(obj, dict):
        rd.err(path, "expected an object")
        return None
    aid = rd.get(obj, "array_id", path, int, required=True)
    rows = rd.get(obj, "rows", path, int, required=True)
    cols = rd.get(obj, "cols", path, int, required=True)
    if aid is None or rows is None or cols is None:
        return None
    if "weights_file" in obj:
        rel = rd.get(obj, "weights_file", path, str)
        if rel is None:
            return None
        if base_dir is None:
            rd.err(f"{path}.weights_file", "external weights need a base directory")
            return None
        try:
            blob = (base_dir / rel).read_bytes()
        except OSError as e:
            rd.err(f"{path}.weights_file", f"cannot read '{rel}': {e}")
            return None
        if len(blob) != rows * cols * 4:
            rd.err(f"{path}.weights_file",
                   f"'{rel}' holds {len(blob)} bytes, expected {rows * cols * 4}")
            return None
        flat = struct.unpack(f"<{rows * cols}i", blob)
        weights = [list(flat[r * cols:(r + 1) * cols]) for r in range(rows)]
    else:
        weights = rd.get(obj, "weights", path, list, required=True)
        if weights is None:
            return None
        for r, row in enumerate(weights):
            if not isinstance(row, list) or not all(
                    isinstance(w, int) and not isinstance(w, bool) for w in row):
                rd.err(f"{path}.weights[{r}]", "expected a list of integers")
                return None
        weights = [list(row) for row in weights]
    return LogicalArray(aid, rows, cols, weights)


def _parse_group(rd: _Reader, obj, path: str) -> ArrayGroup | None:
    if not isinstance(obj, dict):
        rd.err(path, "expected an object")
        return None
    gid = rd.get(obj, "group_id", path, int, required=True)
    rows = rd.get(obj, "total_rows", path, int, required=True)
    cols = rd.get(obj, "total_cols", path, int, required=True)
    tiles_raw = rd.get(obj, "tiles", path, list, required=True)
    if None in (gid, rows, cols, tiles_raw):
        return None
    tiles = []
    for t, tile in enumerate(tiles_raw):
        if (not isinstance(tile, list) or len(tile) != 3
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in tile)):
            rd.err(f"{path}.tiles[{t}]", "expected [array_id, row_offset, col_offset]")
            return None
        tiles.append((tile[0], tile[1], tile[2]))
    return ArrayGroup(gid, tiles, rows, cols)


def _parse_code(rd: _Reader, lines, path: str) -> list[Instruction]:
    for j, line in enumerate(lines):
        if not isinstance(line, str):
            rd.err(f"{path}[{j}]", "expected an assembly string")
            return []
    text = ".core 0\n" + "\n".join(lines)
    result = asm.assemble(text)
    if isinstance(result, list):
        for d in result:
            rd.err(f"{path}[{d.line - 2}]", d.message)
        return []
    return result.sections[0].instructions if result.sections else []


def _parse_core(rd: _Reader, obj, path: str, base_dir: Path | None) -> CoreConfig | None:
    if not isinstance(obj, dict):
        rd.err(path, "expected an object")
        return None
    cid = rd.get(obj, "core_id", path, int, required=True)
    if cid is None:
        return None
    code = _parse_code(rd, rd.get(obj, "code", path, list, default=[]), f"{path}.code")
    arrays = []
    for j, a in enumerate(rd.get(obj, "arrays", path, list, default=[])):
        arr = _parse_array(rd, a, f"{path}.arrays[{j}]", base_dir)
        if arr is not None:
            arrays.append(arr)
    groups = []
    for j, g in enumerate(rd.get(obj, "groups", path, list, default=[])):
        grp = _parse_group(rd, g, f"{path}.groups[{j}]")
        if grp is not None:
            groups.append(grp)
    return CoreConfig(
        core_id=cid,
        code=code,
        local_mem_bytes=rd.get(obj, "local_mem_bytes", path, int, DEFAULT_LOCAL_MEM),
        event_register_count=rd.get(obj, "event_register_count", path, int,
                                    DEFAULT_EVENT_REGS),
        arrays=arrays,
        groups=groups,
        initial_ibiw=rd.get(obj, "initial_ibiw", path, int, DEFAULT_BIW),
        initial_obiw=rd.get(obj, "initial_obiw", path, int, DEFAULT_BIW),
    )


def parse_bundle(data: bytes | str,
                 base_dir: str | Path | None = None,
                 ) -> ProgramBundle | list[ManifestError]:
    """Parse and fully validate a manifest.

    Returns the bundle, or the list of structured errors (each with a JSON
    path). base_dir resolves relative weights_file references.
    """
    rd = _Reader()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            return [ManifestError("$", f"not valid UTF-8: {e}")]
    try:
        root = json.loads(data)
    except json.JSONDecodeError as e:
        return [ManifestError("$", f"malformed JSON: {e}")]
    if not isinstance(root, dict):
        return [ManifestError("$", "top level must be an object")]

    fmt = rd.get(root, "format", "$", str, "pimbundle")
    if fmt != "pimbundle":
        rd.err("$.format", f"expected 'pimbundle', got '{fmt}'")
    version = rd.get(root, "version", "$", int, 1)
    if version != 1:
        rd.err("$.version", f"unsupported version {version}")

    mode_val = rd.get(root, "mode", "$", int, 64)
    try:
        mode = EncodingMode(mode_val)
    except ValueError:
        rd.err("$.mode", f"mode must be 64 or 32, got {mode_val}")
        mode = EncodingMode.WORD64

    qf = rd.get(root, "activation_qformat", "$", (list, type(None)))
    qformat = None
    if qf is not None:
        if len(qf) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in qf):
            qformat = (qf[0], qf[1])
        else:
            rd.err("$.activation_qformat", "expected [frac_in, frac_out]")

    gmem_init: list[tuple[int, bytes]] = []
    for k, entry in enumerate(rd.get(root, "global_mem_init", "$", list, default=[])):
        epath = f"$.global_mem_init[{k}]"
        if (not isinstance(entry, list) or len(entry) != 2
                or not isinstance(entry[0], int) or not isinstance(entry[1], str)):
            rd.err(epath, "expected [address, hex-string]")
            continue
        try:
            gmem_init.append((entry[0], bytes.fromhex(entry[1])))
        except ValueError:
            rd.err(epath, "invalid hex string")

    base = Path(base_dir) if base_dir is not None else None
    cores = []
    for i, c in enumerate(rd.get(root, "cores", "$", list, required=True, default=[])):
        core = _parse_core(rd, c, f"$.cores[{i}]", base)
        if core is not None:
            cores.append(core)

    if rd.errors:
        return rd.errors
    bundle = ProgramBundle(
        mode=mode,
        cores=cores,
        global_mem_bytes=rd.get(root, "global_mem_bytes", "$", int, DEFAULT_GLOBAL_MEM),
        global_mem_init=gmem_init,
        activation_qformat=qformat,
        variable_bitwidth_supported=rd.get(root, "variable_bitwidth_supported",
                                           "$", bool, True),
    )
    semantic = validate_bundle(bundle)
    return semantic if semantic else bundle


def serialize_bundle(bundle: ProgramBundle) -> bytes:
    """Inverse of parse_bundle; output is byte-stable and weights go inline."""
    root = {
        "format": "pimbundle",
        "version": 1,
        "mode": int(bundle.mode),
        "global_mem_bytes": bundle.global_mem_bytes,
        "variable_bitwidth_supported": bundle.variable_bitwidth_supported,
        "activation_qformat": (list(bundle.activation_qformat)
                               if bundle.activation_qformat else None),
        "global_mem_init": [[addr, blob.hex()] for addr, blob in bundle.global_mem_init],
        "cores": [
            {
                "core_id": core.core_id,
                "local_mem_bytes": core.local_mem_bytes,
                "event_register_count": core.event_register_count,
                "initial_ibiw": core.initial_ibiw,
                "initial_obiw": core.initial_obiw,
                "code": [asm.format_instruction(i) for i in core.code],
                "arrays": [
                    {"array_id": a.array_id, "rows": a.rows, "cols": a.cols,
                     "weights": a.weights}
                    for a in core.arrays
                ],
                "groups": [
                    {"group_id": g.group_id, "total_rows": g.total_rows,
                     "total_cols": g.total_cols,
                     "tiles": [list(t) for t in g.tiles]}
                    for g in core.groups
                ],
            }
            for core in bundle.cores
        ],
    }
    return (json.dumps(root, indent=1) + "\n").encode("utf-8")
