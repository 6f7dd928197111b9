"""Brute-force reference semantics, independent of the vm implementation.

Everything here is pure Python over ints and bytearrays: unbounded-precision
arithmetic with quantization applied only at the final store. The vm and its
kernels are never imported; trap kinds are matched by name. The point is
differential testing, so clarity beats speed throughout.

Per-instruction semantics live in ref_exec. Communication and
synchronization effects (send/recv copies, sync increments, wait
check-and-reset) are applied by RefMachine during diff_run, which replays a
vm trace on shadow state and byte-compares every declared effect.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .isa import Instruction, Op
from .manifest import CoreConfig, ProgramBundle


class RefTrap(Exception):
    """Reference trap; kind strings match the vm taxonomy by name."""

    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


class DimensionMismatch(ValueError):
    pass


def _scatter(config: CoreConfig) -> dict[int, list[list[int]]]:
    # our own tile scatter, deliberately not manifest.assemble_group_matrix
    arrays = {a.array_id: a for a in config.arrays}
    out = {}
    for g in config.groups:
        mat = [[0] * g.total_cols for _ in range(g.total_rows)]
        for aid, roff, coff in g.tiles:
            arr = arrays[aid]
            for r in range(arr.rows):
                for c in range(arr.cols):
                    mat[roff + r][coff + c] = arr.weights[r][c]
        out[g.group_id] = mat
    return out


@dataclass
class RefEnv:
    lmem: bytearray
    regs: list[int]
    ibiw: int
    obiw: int
    groups: dict[int, list[list[int]]]
    qformat: tuple[int, int] | None
    events: list[int] = field(default_factory=list)
    variable_bitwidth: bool = True
    strict_overlap: bool = True
    gmem: bytearray | None = None

    @property
    def ibyw(self) -> int:
        return (self.ibiw + 7) // 8

    @property
    def obyw(self) -> int:
        return (self.obiw + 7) // 8

    @classmethod
    def from_core(cls, config: CoreConfig, bundle: ProgramBundle,
                  gmem: bytearray | None = None,
                  strict_overlap: bool = True) -> "RefEnv":
        return cls(
            lmem=bytearray(config.local_mem_bytes),
            regs=[0] * 32,
            ibiw=config.initial_ibiw,
            obiw=config.initial_obiw,
            groups=_scatter(config),
            qformat=bundle.activation_qformat,
            events=[0] * config.event_register_count,
            variable_bitwidth=bundle.variable_bitwidth_supported,
            strict_overlap=strict_overlap,
            gmem=gmem,
        )


# ------------------------------------------------------- scalar value rules

def _wrap(v: int, biw: int) -> int:
    v &= (1 << biw) - 1
    return v - (1 << biw) if v >= (1 << (biw - 1)) else v


def _sat(v: int, biw: int) -> int:
    lo, hi = -(1 << (biw - 1)), (1 << (biw - 1)) - 1
    return lo if v < lo else hi if v > hi else v


def _s32(v: int) -> int:
    return _wrap(v, 32)


def _round_half_away(x: float) -> int:
    return math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)


def _activation(kind: str, a: int, frac_in: int, frac_out: int, obiw: int) -> int:
    v = a * 2.0 ** -frac_in
    if kind == "tanh":
        f = math.tanh(v)
    elif v >= 0.0:
        f = 1.0 / (1.0 + math.exp(-v))
    else:
        e = math.exp(v)
        f = e / (1.0 + e)
    return _sat(_round_half_away(f * 2.0 ** frac_out), obiw)


# ---------------------------------------------------------- memory plumbing

def _load(env: RefEnv, addr: int, n: int, ebytes: int, biw: int) -> list[int]:
    _check(env, addr, n * ebytes)
    out = []
    for i in range(n):
        cell = int.from_bytes(env.lmem[addr + i * ebytes:addr + (i + 1) * ebytes],
                              "little")
        out.append(_wrap(cell, biw))
    return out


def _store(env: RefEnv, addr: int, vals: list[int], ebytes: int, biw: int) -> None:
    _check(env, addr, len(vals) * ebytes)
    for i, v in enumerate(vals):
        cell = v & ((1 << biw) - 1)
        env.lmem[addr + i * ebytes:addr + (i + 1) * ebytes] = cell.to_bytes(
            ebytes, "little")


def _check(env: RefEnv, addr: int, nbytes: int) -> None:
    if nbytes and not (0 <= addr and addr + nbytes <= len(env.lmem)):
        raise RefTrap("OutOfBoundsLocal", f"[{addr}, {addr + nbytes})")


def _check_g(env: RefEnv, addr: int, nbytes: int) -> None:
    if env.gmem is None:
        raise RefTrap("OutOfBoundsGlobal", "no global memory attached")
    if nbytes and not (0 <= addr and addr + nbytes <= len(env.gmem)):
        raise RefTrap("OutOfBoundsGlobal", f"[{addr}, {addr + nbytes})")


def _ea(base: int, sel: int, bit: int, off: int, ebytes: int) -> int:
    return base + ebytes * off if (sel >> bit) & 1 else base


def _need_len(instr: Instruction) -> int:
    if instr.imm_len < 1:
        raise RefTrap("LengthMismatch", "vector length must be >= 1")
    return instr.imm_len


def _overlap(a: int, alen: int, b: int, blen: int) -> bool:
    return alen > 0 and blen > 0 and a < b + blen and b < a + alen


# ----------------------------------------------------------------- ref_exec

def ref_exec(instr: Instruction, env: RefEnv) -> RefEnv:
    """Execute one compute/memory instruction on env, in place.

    send/recv/wait/sync are machine-level and handled by RefMachine;
    passing one here raises LookupError.
    """
    op = Op(instr.op)
    handler = _HANDLERS.get(op)
    if handler is None:
        raise LookupError(f"{op.mnemonic} is handled at machine level")
    handler(instr, env)
    return env


def _scalar(instr: Instruction, env: RefEnv) -> None:
    op, regs = instr.op, env.regs
    if op == Op.SLDI:
        val = instr.imm & 0xFFFFFFFF
    elif op == Op.SLD:
        addr = (regs[instr.rs1] | (regs[instr.rs1 + 1] << 32)) + instr.offset_value
        _check_g(env, addr, 4)
        val = int.from_bytes(env.gmem[addr:addr + 4], "little")
    elif op == Op.SADD:
        val = (regs[instr.rs1] + regs[instr.rs2]) & 0xFFFFFFFF
    elif op == Op.SSUB:
        val = (regs[instr.rs1] - regs[instr.rs2]) & 0xFFFFFFFF
    elif op == Op.SMUL:
        val = (regs[instr.rs1] * regs[instr.rs2]) & 0xFFFFFFFF
    elif op == Op.SADDI:
        val = (regs[instr.rs1] + instr.imm) & 0xFFFFFFFF
    else:
        val = (regs[instr.rs1] * instr.imm) & 0xFFFFFFFF
    regs[instr.rd] = val


def _setbw(instr: Instruction, env: RefEnv) -> None:
    if not env.variable_bitwidth:
        raise RefTrap("InvalidInstructionForHardware", "setbw")
    if not (1 <= instr.ibiw <= 32 and 1 <= instr.obiw <= 32):
        raise RefTrap("InvalidInstructionForHardware", "bit width range")
    env.ibiw, env.obiw = instr.ibiw, instr.obiw


def _mvmul(instr: Instruction, env: RefEnv) -> None:
    if instr.imm_group not in env.groups:
        raise RefTrap("UnknownGroup", str(instr.imm_group))
    w = env.groups[instr.imm_group]
    rows, cols = len(w), len(w[0])
    x = _load(env, env.regs[instr.rs1], cols, env.ibyw, env.ibiw)
    out = []
    for r in range(rows):
        acc = sum(w[r][c] * x[c] for c in range(cols))
        if instr.relu and acc < 0:
            acc = 0
        out.append(_sat(acc, env.obiw))
    _store(env, env.regs[instr.rd], out, env.obyw, env.obiw)


_BINOPS = {
    Op.VVADD: (lambda a, b: a + b, "i"),
    Op.VSUB: (lambda a, b: a - b, "i"),
    Op.VMAX: (lambda a, b: max(a, b), "i"),
    Op.VMUL: (lambda a, b: a * b, "o"),
}


def _elementwise(instr: Instruction, env: RefEnv) -> None:
    n = _need_len(instr)
    sel, off, ibyw = instr.sel, instr.offset_value, env.ibyw
    if instr.op == Op.VRELU:
        a = _load(env, _ea(env.regs[instr.rs1], sel, 1, off, ibyw), n, ibyw, env.ibiw)
        out = [max(0, v) for v in a]
        _store(env, _ea(env.regs[instr.rd], sel, 0, off, ibyw), out, ibyw, env.ibiw)
        return
    a = _load(env, _ea(env.regs[instr.rs1], sel, 1, off, ibyw), n, ibyw, env.ibiw)
    b = _load(env, _ea(env.regs[instr.rs2], sel, 2, off, ibyw), n, ibyw, env.ibiw)
    if instr.op in (Op.VVSLL, Op.VVSRA):
        for i, s in enumerate(b):
            if s < 0:
                raise RefTrap("NegativeShift", f"element {i} is {s}")
        shifts = [min(s, 63) for s in b]
        if instr.op == Op.VVSLL:
            out = [_wrap(v << s, env.obiw) for v, s in zip(a, shifts)]
        else:
            out = [_wrap(v >> s, env.obiw) for v, s in zip(a, shifts)]
        _store(env, _ea(env.regs[instr.rd], sel, 0, off, env.obyw), out,
               env.obyw, env.obiw)
        return
    fn, width = _BINOPS[instr.op]
    biw = env.ibiw if width == "i" else env.obiw
    ebytes = env.ibyw if width == "i" else env.obyw
    out = [_wrap(fn(x, y), biw) for x, y in zip(a, b)]
    _store(env, _ea(env.regs[instr.rd], sel, 0, off, ebytes), out, ebytes, biw)


def _act(instr: Instruction, env: RefEnv) -> None:
    n = _need_len(instr)
    qf = env.qformat if env.qformat is not None else (env.ibiw - 2, env.obiw - 2)
    a = _load(env, _ea(env.regs[instr.rs1], instr.sel, 1, instr.offset_value,
                       env.ibyw), n, env.ibyw, env.ibiw)
    kind = "tanh" if instr.op == Op.VTANH else "sigm"
    out = [_activation(kind, v, qf[0], qf[1], env.obiw) for v in a]
    _store(env, _ea(env.regs[instr.rd], instr.sel, 0, instr.offset_value,
                    env.obyw), out, env.obyw, env.obiw)


def _reduce(instr: Instruction, env: RefEnv) -> None:
    n = _need_len(instr)
    sel, off, ibyw = instr.sel, instr.offset_value, env.ibyw
    if instr.op == Op.VDMUL:
        a = _load(env, _ea(env.regs[instr.rs1], sel, 1, off, ibyw), n, ibyw, env.ibiw)
        b = _load(env, _ea(env.regs[instr.rs2], sel, 2, off, ibyw), n, ibyw, env.ibiw)
        acc = sum(x * y for x, y in zip(a, b))
    else:  # VAVG
        stride = _s32(env.regs[instr.rs2])
        if stride < 1:
            raise RefTrap("LengthMismatch", f"vavg stride {stride}")
        base = env.regs[instr.rs1] + ibyw * off
        _check(env, base, (n - 1) * stride * ibyw + ibyw)
        total = 0
        for i in range(n):
            cell = int.from_bytes(
                env.lmem[base + i * stride * ibyw:base + i * stride * ibyw + ibyw],
                "little")
            total += _wrap(cell, env.ibiw)
        q = abs(total) // n
        acc = q if total >= 0 else -q
    _store(env, env.regs[instr.rd], [_wrap(acc, env.obiw)], env.obyw, env.obiw)


def _move_resize(instr: Instruction, env: RefEnv) -> None:
    if instr.op != Op.VMV and not env.variable_bitwidth:
        raise RefTrap("InvalidInstructionForHardware", Op(instr.op).mnemonic)
    n = _need_len(instr)
    ibyw, obyw = env.ibyw, env.obyw
    if instr.op == Op.VMV:
        stride = _s32(env.regs[instr.rs2])
        src, dst = env.regs[instr.rs1], env.regs[instr.rd]
        first = src + min(0, (n - 1) * stride) * ibyw
        last = src + max(0, (n - 1) * stride) * ibyw
        _check(env, first, last - first + ibyw)
        _check(env, dst, n * ibyw)
        cells = [src + i * stride * ibyw for i in range(n)]
        if any(_overlap(p, ibyw, dst, n * ibyw) for p in cells):
            if env.strict_overlap:
                raise RefTrap("OverlapUndefined", "vmv")
        vals = [_wrap(int.from_bytes(env.lmem[p:p + ibyw], "little"), env.ibiw)
                for p in cells]
        _store(env, dst, vals, ibyw, env.ibiw)
        return
    bound = _s32(env.regs[instr.rs2])
    src = _ea(env.regs[instr.rs1], instr.sel, 1, instr.offset_value, ibyw)
    dst = _ea(env.regs[instr.rd], instr.sel, 0, instr.offset_value, obyw)
    _check(env, src, n * ibyw)
    _check(env, dst, n * obyw)
    clamp = (lambda v: min(v, bound)) if instr.op == Op.VRSU else \
            (lambda v: max(v, bound))
    if _overlap(src, n * ibyw, dst, n * obyw):
        if obyw > ibyw:
            raise RefTrap("OverlapUndefined", "vrsu/vrsl growing overlap")
        for i in range(n):
            v = _wrap(int.from_bytes(
                env.lmem[src + i * ibyw:src + i * ibyw + ibyw], "little"), env.ibiw)
            cell = clamp(v) & ((1 << env.obiw) - 1)
            env.lmem[dst + i * obyw:dst + (i + 1) * obyw] = cell.to_bytes(
                obyw, "little")
        return
    a = _load(env, src, n, ibyw, env.ibiw)
    _store(env, dst, [clamp(v) for v in a], obyw, env.obiw)


def _mem(instr: Instruction, env: RefEnv) -> None:
    op, regs = instr.op, env.regs
    size, sel, off = instr.imm_size, instr.sel, instr.offset_value
    if op == Op.LDI:
        dst = regs[instr.rd] + off
        _check(env, dst, size)
        env.lmem[dst:dst + size] = bytes([instr.imm8]) * size
        return
    if op == Op.LD:
        gaddr = _ea(regs[instr.rs1] | (regs[instr.rs1 + 1] << 32), sel, 1, off, 1)
        dst = _ea(regs[instr.rd], sel, 0, off, 1)
        _check_g(env, gaddr, size)
        _check(env, dst, size)
        env.lmem[dst:dst + size] = env.gmem[gaddr:gaddr + size]
        return
    if op == Op.ST:
        gaddr = _ea(regs[instr.rd] | (regs[instr.rd + 1] << 32), sel, 0, off, 1)
        src = _ea(regs[instr.rs1], sel, 1, off, 1)
        _check(env, src, size)
        _check_g(env, gaddr, size)
        env.gmem[gaddr:gaddr + size] = env.lmem[src:src + size]
        return
    dst = _ea(regs[instr.rd], sel, 0, off, 1)
    src = _ea(regs[instr.rs1], sel, 1, off, 1)
    _check(env, src, size)
    _check(env, dst, size)
    if _overlap(src, size, dst, size) and env.strict_overlap:
        raise RefTrap("OverlapUndefined", "lmv")
    env.lmem[dst:dst + size] = bytes(env.lmem[src:src + size])


_HANDLERS = {
    Op.SLDI: _scalar, Op.SLD: _scalar, Op.SADD: _scalar, Op.SSUB: _scalar,
    Op.SMUL: _scalar, Op.SADDI: _scalar, Op.SMULI: _scalar,
    Op.SETBW: _setbw, Op.MVMUL: _mvmul,
    Op.VVADD: _elementwise, Op.VSUB: _elementwise, Op.VMUL: _elementwise,
    Op.VMAX: _elementwise, Op.VVSLL: _elementwise, Op.VVSRA: _elementwise,
    Op.VRELU: _elementwise,
    Op.VTANH: _act, Op.VSIGM: _act,
    Op.VDMUL: _reduce, Op.VAVG: _reduce,
    Op.VMV: _move_resize, Op.VRSU: _move_resize, Op.VRSL: _move_resize,
    Op.LD: _mem, Op.ST: _mem, Op.LDI: _mem, Op.LMV: _mem,
}


# -------------------------------------------------------------- layer level

def ref_fc_layer(w: list[list[int]], x: list[int], bias: list[int],
                 relu: int, widths: tuple[int, int]) -> list[int]:
    """Reference for one lowered FC layer: mvmul (ReLU fused, saturating to
    obiw), then bias via the vvadd wrap rule at ibiw.

    The lowered sequence needs obiw == ibiw at the bias step, so mismatched
    widths are rejected.
    """
    ibiw, obiw = widths
    if ibiw != obiw:
        raise DimensionMismatch(f"layer boundary needs ibiw == obiw, "
                                f"got {ibiw}/{obiw}")
    rows = len(w)
    if rows == 0 or len(bias) != rows:
        raise DimensionMismatch(f"bias length {len(bias)} vs {rows} rows")
    cols = len(w[0])
    if len(x) != cols or any(len(r) != cols for r in w):
        raise DimensionMismatch(f"input length {len(x)} vs {cols} cols")
    out = []
    for r in range(rows):
        acc = sum(w[r][c] * x[c] for c in range(cols))
        if relu and acc < 0:
            acc = 0
        out.append(_wrap(_sat(acc, obiw) + bias[r], ibiw))
    return out


def ref_activation_vec(vals: list[int], kind: str, frac_in: int,
                       frac_out: int, obiw: int) -> list[int]:
    return [_activation(kind, v, frac_in, frac_out, obiw) for v in vals]


# ------------------------------------------------------------ shadow replay

class RefMachine:
    """Shadow state for diff_run; applies machine-level effects itself."""

    def __init__(self, bundle: ProgramBundle, strict_overlap: bool = True):
        self.bundle = bundle
        self.gmem = bytearray(bundle.global_mem_bytes)
        for addr, blob in bundle.global_mem_init:
            self.gmem[addr:addr + len(blob)] = blob
        self.envs = [RefEnv.from_core(c, bundle, self.gmem, strict_overlap)
                     for c in bundle.cores]

    def apply_sync(self, instr: Instruction) -> int:
        env = self.envs[instr.imm_core]
        env.events[instr.imm_ev] = (env.events[instr.imm_ev] + 1) & 0xFFFFFFFF
        return env.events[instr.imm_ev]

    def apply_wait(self, core: int, instr: Instruction) -> bool:
        env = self.envs[core]
        if env.events[instr.imm_ev] != instr.imm_val:
            return False
        env.events[instr.imm_ev] = 0
        return True

    def apply_rendezvous(self, src_core: int, send: Instruction,
                         dst_core: int, recv: Instruction) -> None:
        if send.imm_size != recv.imm_size:
            raise RefTrap("SizeMismatchSendRecv",
                          f"{send.imm_size} vs {recv.imm_size}")
        tx, rx = self.envs[src_core], self.envs[dst_core]
        s = tx.regs[send.rs1] + send.offset_value
        d = rx.regs[recv.rd] + recv.offset_value
        _check(tx, s, send.imm_size)
        _check(rx, d, recv.imm_size)
        rx.lmem[d:d + recv.imm_size] = tx.lmem[s:s + send.imm_size]


@dataclass
class DiffReport:
    diverged: bool
    steps: int
    stop: str
    seed: int | None = None
    step: int | None = None
    core: int | None = None
    pc: int | None = None
    field: str | None = None
    expected: str | None = None
    actual: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "diverged": self.diverged, "steps": self.steps, "stop": self.stop,
            "seed": self.seed, "step": self.step, "core": self.core,
            "pc": self.pc, "field": self.field,
            "expected": self.expected, "actual": self.actual,
        }, indent=1)


def diff_run(bundle: ProgramBundle, max_steps: int = 1_000_000,
             strict_overlap: bool = True, seed: int | None = None,
             fault: str | None = None) -> DiffReport:
    """Run the vm, replay its trace through the reference, compare everything.

    The fault argument is forwarded to the vm for mutation testing of this
    very harness.
    """
    from .vm import Machine  # the subject under test; oracle state stays ours

    events = []
    m = Machine(bundle, strict_overlap=strict_overlap,
                trace_sink=events.append, fault=fault)
    result = m.run(max_steps)
    shadow = RefMachine(bundle, strict_overlap)

    def report(ev, fld, expected, actual):
        return DiffReport(True, result.steps, result.stop.value, seed,
                          ev.step, ev.core, ev.pc, fld,
                          str(expected), str(actual))

    i = 0
    while i < len(events):
        ev = events[i]
        env = shadow.envs[ev.core]
        instr = bundle.cores[ev.core].code[ev.pc]
        op = Op(instr.op)
        if op == Op.SEND:
            if i + 1 >= len(events):
                return report(ev, "trace", "recv event after send", "missing")
            rv = events[i + 1]
            recv = bundle.cores[rv.core].code[rv.pc]
            try:
                shadow.apply_rendezvous(ev.core, instr, rv.core, recv)
            except RefTrap as t:
                return report(ev, "trap", t.kind, "no trap in vm")
            d = rv.effects[0]
            got = bytes(shadow.envs[rv.core].lmem[d[1]:d[1] + len(d[2])])
            if got != d[2]:
                return report(rv, f"lmem[{d[1]}]", got.hex(), d[2].hex())
            i += 2
            continue
        if op == Op.SYNC:
            val = shadow.apply_sync(instr)
            e = ev.effects[0]
            if val != e[3]:
                return report(ev, f"event[{e[1]}][{e[2]}]", val, e[3])
            i += 1
            continue
        if op == Op.WAIT:
            if not shadow.apply_wait(ev.core, instr):
                return report(ev, f"event[{ev.core}][{instr.imm_ev}]",
                              "wait must not pass", "vm passed")
            i += 1
            continue
        try:
            ref_exec(instr, env)
        except RefTrap as t:
            return report(ev, "trap", t.kind, "no trap in vm")
        for e in ev.effects:
            if e[0] == "reg":
                if env.regs[e[1]] != e[2]:
                    return report(ev, f"reg[{e[1]}]", env.regs[e[1]], e[2])
            elif e[0] == "lmem":
                got = bytes(env.lmem[e[1]:e[1] + len(e[2])])
                if got != e[2]:
                    return report(ev, f"lmem[{e[1]}]", got.hex(), e[2].hex())
            elif e[0] == "gmem":
                got = bytes(shadow.gmem[e[1]:e[1] + len(e[2])])
                if got != e[2]:
                    return report(ev, f"gmem[{e[1]}]", got.hex(), e[2].hex())
            elif e[0] == "bw":
                if (env.ibiw, env.obiw) != (e[1], e[2]):
                    return report(ev, "bw", (env.ibiw, env.obiw), (e[1], e[2]))
        i += 1

    # vm trap: the reference must trap identically on the same instruction
    if result.traps:
        trap = result.traps[0]
        instr = bundle.cores[trap.core].code[trap.pc] if \
            trap.pc < len(bundle.cores[trap.core].code) else None
        op = Op(instr.op) if instr is not None else None
        kind = None
        if trap.kind.value == "Deadlock" or op in (Op.WAIT, Op.SYNC, None):
            kind = trap.kind.value  # scheduler-level; no per-instr reference
        elif op in (Op.SEND, Op.RECV):
            # pairing comes from the vm, the semantic re-check is ours
            other = m.cores[instr.imm_core]
            partner = bundle.cores[other.core_id].code[other.pc]
            if op == Op.SEND:
                args = (trap.core, instr, other.core_id, partner)
            else:
                args = (other.core_id, partner, trap.core, instr)
            try:
                shadow.apply_rendezvous(*args)
            except RefTrap as t:
                kind = t.kind
        else:
            try:
                ref_exec(instr, shadow.envs[trap.core])
            except RefTrap as t:
                kind = t.kind
        if kind != trap.kind.value:
            return DiffReport(True, result.steps, result.stop.value, seed,
                              result.steps, trap.core, trap.pc, "trap",
                              str(kind), trap.kind.value)

    # final full-state comparison
    for cid, env in enumerate(shadow.envs):
        core = m.cores[cid]
        if bytes(env.lmem) != core.lmem.tobytes():
            first = next(k for k in range(len(env.lmem))
                         if env.lmem[k] != core.lmem[k])
            return DiffReport(True, result.steps, result.stop.value, seed,
                              None, cid, None, f"final lmem[{first}]",
                              str(env.lmem[first]), str(int(core.lmem[first])))
        if env.regs != core.regs:
            k = next(j for j in range(32) if env.regs[j] != core.regs[j])
            return DiffReport(True, result.steps, result.stop.value, seed,
                              None, cid, None, f"final reg[{k}]",
                              str(env.regs[k]), str(core.regs[k]))
        if env.events != core.events:
            return DiffReport(True, result.steps, result.stop.value, seed,
                              None, cid, None, "final events",
                              str(env.events), str(core.events))
    if bytes(shadow.gmem) != m.gmem.tobytes():
        first = next(k for k in range(len(shadow.gmem))
                     if shadow.gmem[k] != m.gmem[k])
        return DiffReport(True, result.steps, result.stop.value, seed,
                          None, None, None, f"final gmem[{first}]",
                          str(shadow.gmem[first]), str(int(m.gmem[first])))
    return DiffReport(False, result.steps, result.stop.value, seed)


