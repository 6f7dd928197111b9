"""Deterministic multi-core functional simulator.

Machine model: every core owns a scalar unit (32 registers of 32 bits, used
for addressing and control only), a PIM matrix unit programmed with the
bundle's array groups, a vector unit working on local memory, and a set of
32-bit event registers. Cores share one global memory. DNN data lives in
local memory as little-endian elements of ceil(biw/8) bytes, sign-extended
from bit biw-1 on read; the bits above biw are stored zero.

Scheduling is strict round-robin with a rotating start index: each step()
visits cores in ascending id starting after the core that executed last and
runs one instruction on the first core that can complete one. send/recv
form a rendezvous that completes both sides atomically within one step.
The interleaving is a canonical choice; programs that follow the
synchronization rules cannot observe it.

Overflow policy: elementwise vector ops wrap modulo 2^biw, mvmul and the
activations saturate to the signed obiw range. Traps halt the whole
machine and carry the faulting core and pc.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import asm, kernels
from .isa import EvenRegisterRequired, Instruction, Op
from .manifest import BITWIDTH_OPS, CoreConfig, ProgramBundle, assemble_group_matrix

U32 = 0xFFFFFFFF


class TrapKind(Enum):
    OUT_OF_BOUNDS_LOCAL = "OutOfBoundsLocal"
    OUT_OF_BOUNDS_GLOBAL = "OutOfBoundsGlobal"
    UNKNOWN_GROUP = "UnknownGroup"
    LENGTH_MISMATCH = "LengthMismatch"
    OVERLAP_UNDEFINED = "OverlapUndefined"
    NEGATIVE_SHIFT = "NegativeShift"
    INVALID_FOR_HARDWARE = "InvalidInstructionForHardware"
    SIZE_MISMATCH_SEND_RECV = "SizeMismatchSendRecv"
    DEADLOCK = "Deadlock"


class Trap(Exception):
    def __init__(self, kind: TrapKind, core: int, pc: int, detail: str = ""):
        super().__init__(f"{kind.value} at core {core} pc {pc}: {detail}")
        self.kind = kind
        self.core = core
        self.pc = pc
        self.detail = detail

    def key(self) -> tuple:
        return (self.kind.value, self.core, self.pc)


class Status(Enum):
    READY = "ready"
    BLOCKED_SEND = "blocked-send"
    BLOCKED_RECV = "blocked-recv"
    BLOCKED_WAIT = "blocked-wait"
    FINISHED = "finished"

BLOCKED = (Status.BLOCKED_SEND, Status.BLOCKED_RECV, Status.BLOCKED_WAIT)


class StepOutcome(Enum):
    PROGRESSED = "progressed"
    ALL_BLOCKED_OR_FINISHED = "all-blocked-or-finished"
    TRAPPED = "trapped"


class StopReason(Enum):
    FINISHED = "finished"
    TRAPPED = "trapped"
    STEP_LIMIT = "step-limit"


@dataclass
class BitWidthState:
    ibiw: int = 8
    obiw: int = 8

    @property
    def ibyw(self) -> int:
        return (self.ibiw + 7) // 8

    @property
    def obyw(self) -> int:
        return (self.obiw + 7) // 8


@dataclass(frozen=True)
class TraceEvent:
    step: int
    core: int
    pc: int
    text: str
    # ("reg", idx, value) | ("lmem", start, bytes) | ("gmem", start, bytes) |
    # ("event", core, ev, value) | ("msg", src, dst, size) | ("bw", ibiw, obiw)
    effects: tuple[tuple, ...]

    def format(self) -> str:
        return "\t".join((str(self.step), str(self.core), str(self.pc),
                          self.text, format_effects(self.effects)))


def format_effects(effects: tuple[tuple, ...]) -> str:
    parts = []
    for e in effects:
        k = e[0]
        if k == "reg":
            parts.append(f"r{e[1]}=0x{e[2]:x}")
        elif k in ("lmem", "gmem"):
            parts.append(f"{k}[{e[1]}:{e[1] + len(e[2])}]={e[2].hex()}")
        elif k == "event":
            parts.append(f"ev{e[2]}@core{e[1]}={e[3]}")
        elif k == "msg":
            parts.append(f"msg {e[1]}->{e[2]} {e[3]}B")
        elif k == "bw":
            parts.append(f"bw={e[1]}/{e[2]}")
    return " ".join(parts) if parts else "-"


class CoreState:
    def __init__(self, config: CoreConfig):
        self.config = config
        self.pc = 0
        self.regs = [0] * 32
        self.lmem = np.zeros(config.local_mem_bytes, np.uint8)
        self.events = [0] * config.event_register_count
        self.bw = BitWidthState(config.initial_ibiw, config.initial_obiw)
        self.status = Status.FINISHED if not config.code else Status.READY
        # group id -> (int64 matrix, max |w|); the int fallback uses tolist()
        self.group_mats: dict[int, tuple[np.ndarray, int]] = {}
        for g in config.groups:
            m = np.array(assemble_group_matrix(config, g.group_id), np.int64)
            self.group_mats[g.group_id] = (m, int(np.abs(m).max(initial=0)))

    @property
    def core_id(self) -> int:
        return self.config.core_id

    def current(self) -> Instruction:
        return self.config.code[self.pc]


@dataclass
class RunResult:
    steps: int
    stop: StopReason
    traps: list[Trap]
    per_opcode: dict[str, int]
    per_core: list[int]
    bytes_sent: int
    pair_bytes: dict[tuple[int, int], int] = field(default_factory=dict)

    def stats_json(self) -> str:
        return json.dumps({
            "steps": self.steps,
            "stop": self.stop.value,
            "per_opcode": dict(sorted(self.per_opcode.items())),
            "per_core": self.per_core,
            "bytes_sent": self.bytes_sent,
            "traps": [{"kind": t.kind.value, "core": t.core, "pc": t.pc,
                       "detail": t.detail} for t in self.traps],
        }, indent=1)


def _sext32(v: int) -> int:
    v &= U32
    return v - (1 << 32) if v >= (1 << 31) else v


def effective_address(base: int, sel: int, offset_value: int, slot: str,
                      elem_bytes: int) -> int:
    """base + elem_bytes*offset_value if the slot's select bit is set.

    Slot bits: rd=0, rs1=1, rs2=2. Byte-offset instructions pass
    elem_bytes=1; bounds are the caller's problem.
    """
    bit = {"rd": 1, "rs1": 2, "rs2": 4}[slot]
    return base + elem_bytes * offset_value if sel & bit else base


# faults for mutation testing of the differential harness; injected via the
# Machine fault argument, never set in normal operation
FAULTS = ("vvadd-off-by-one", "mvmul-no-relu", "shift-clamp-31")


class Machine:
    def __init__(self, bundle: ProgramBundle, *, strict_overlap: bool = True,
                 trace_sink=None, fault: str | None = None):
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}")
        self.bundle = bundle
        self.cores = [CoreState(c) for c in bundle.cores]
        self.gmem = np.zeros(bundle.global_mem_bytes, np.uint8)
        for addr, blob in bundle.global_mem_init:
            self.gmem[addr:addr + len(blob)] = np.frombuffer(blob, np.uint8)
        self.step_count = 0
        self.trace_sink = trace_sink
        self.strict_overlap = strict_overlap
        self.fault = fault
        self.last_started = -1
        self.per_opcode: dict[str, int] = {}
        self.per_core = [0] * len(self.cores)
        self.bytes_sent = 0
        # rendezvous leaves nothing pending; these are conservation counters
        self.mailboxes: dict[tuple[int, int], int] = {}

    # ------------------------------------------------------------ scheduling

    def step(self) -> tuple[StepOutcome, Trap | None]:
        n = len(self.cores)
        for k in range(1, n + 1):
            core = self.cores[(self.last_started + k) % n]
            if core.status == Status.FINISHED:
                continue
            try:
                progressed = self._visit(core)
            except Trap as trap:
                return (StepOutcome.TRAPPED, trap)
            if progressed:
                self.last_started = core.core_id
                self.step_count += 1
                return (StepOutcome.PROGRESSED, None)
        for core in self.cores:
            if core.status in BLOCKED:
                trap = Trap(TrapKind.DEADLOCK, core.core_id, core.pc,
                            f"blocked in state {core.status.value}")
                return (StepOutcome.TRAPPED, trap)
        return (StepOutcome.ALL_BLOCKED_OR_FINISHED, None)

    def run(self, max_steps: int = 1_000_000) -> RunResult:
        trap = None
        while True:
            if all(c.status == Status.FINISHED for c in self.cores):
                stop = StopReason.FINISHED
                break
            if self.step_count >= max_steps:
                stop = StopReason.STEP_LIMIT
                break
            outcome, trap = self.step()
            if outcome == StepOutcome.TRAPPED:
                stop = StopReason.TRAPPED
                break
            if outcome == StepOutcome.ALL_BLOCKED_OR_FINISHED:
                stop = StopReason.FINISHED
                break
        return RunResult(self.step_count, stop,
                         [trap] if trap is not None else [],
                         dict(self.per_opcode), list(self.per_core),
                         self.bytes_sent, dict(self.mailboxes))

    def digest(self) -> int:
        return kernels.fnv1a64(self.gmem)

    # ------------------------------------------------------------- execution

    def _visit(self, core: CoreState) -> bool:
        """Try to complete one instruction; returns False if it must block."""
        instr = core.current()
        op = instr.op
        if op == Op.WAIT:
            return self._exec_wait(core, instr)
        if op == Op.SEND or op == Op.RECV:
            return self._try_rendezvous(core, instr)
        effects = _DISPATCH[op](self, core, instr)
        self._retire(core, effects)
        return True

    def _retire(self, core: CoreState, effects: tuple[tuple, ...]) -> None:
        self._emit(core, effects)
        core.pc += 1
        core.status = (Status.FINISHED if core.pc >= len(core.config.code)
                       else Status.READY)

    def _emit(self, core: CoreState, effects: tuple[tuple, ...]) -> None:
        instr = core.current()
        mn = Op(instr.op).mnemonic
        self.per_opcode[mn] = self.per_opcode.get(mn, 0) + 1
        self.per_core[core.core_id] += 1
        if self.trace_sink is not None:
            self.trace_sink(TraceEvent(self.step_count + 1, core.core_id,
                                       core.pc, asm.format_instruction(instr),
                                       effects))

    # -------------------------------------------------------- bounds helpers

    def _lmem_check(self, core: CoreState, start: int, nbytes: int) -> None:
        if nbytes and not (0 <= start and start + nbytes <= len(core.lmem)):
            raise Trap(TrapKind.OUT_OF_BOUNDS_LOCAL, core.core_id, core.pc,
                       f"lmem range [{start}, {start + nbytes}) of {len(core.lmem)}")

    def _gmem_check(self, core: CoreState, start: int, nbytes: int) -> None:
        if nbytes and not (0 <= start and start + nbytes <= len(self.gmem)):
            raise Trap(TrapKind.OUT_OF_BOUNDS_GLOBAL, core.core_id, core.pc,
                       f"gmem range [{start}, {start + nbytes}) of {len(self.gmem)}")

    def _need_len(self, core: CoreState, instr: Instruction) -> int:
        if instr.imm_len < 1:
            raise Trap(TrapKind.LENGTH_MISMATCH, core.core_id, core.pc,
                       "vector length must be >= 1")
        return instr.imm_len

    def _read_vec(self, core: CoreState, base: int, n: int) -> np.ndarray:
        bw = core.bw
        self._lmem_check(core, base, n * bw.ibyw)
        return kernels.read_elems(core.lmem, base, n, bw.ibyw, bw.ibiw)

    def _write_vec(self, core: CoreState, base: int, vals: np.ndarray,
                   ebytes: int, biw: int) -> tuple:
        nbytes = len(vals) * ebytes
        self._lmem_check(core, base, nbytes)
        kernels.write_elems(core.lmem, base, vals, ebytes, biw)
        return ("lmem", base, bytes(core.lmem[base:base + nbytes]))

    def _gaddr(self, core: CoreState, instr: Instruction, slot: str) -> int:
        reg = getattr(instr, slot)
        if reg % 2:
            raise EvenRegisterRequired(Op(instr.op).mnemonic, slot)
        return core.regs[reg] | (core.regs[reg + 1] << 32)

    # ------------------------------------------------------------ op groups

    def exec_scalar(self, core: CoreState, instr: Instruction) -> tuple:
        op, regs = instr.op, core.regs
        if op == Op.SLDI:
            val = instr.imm & U32
        elif op == Op.SLD:
            addr = self._gaddr(core, instr, "rs1") + instr.offset_value
            self._gmem_check(core, addr, 4)
            val = int.from_bytes(self.gmem[addr:addr + 4].tobytes(), "little")
        elif op == Op.SADD:
            val = (regs[instr.rs1] + regs[instr.rs2]) & U32
        elif op == Op.SSUB:
            val = (regs[instr.rs1] - regs[instr.rs2]) & U32
        elif op == Op.SMUL:
            val = (regs[instr.rs1] * regs[instr.rs2]) & U32
        elif op == Op.SADDI:
            val = (regs[instr.rs1] + instr.imm) & U32
        else:  # SMULI
            val = (regs[instr.rs1] * instr.imm) & U32
        regs[instr.rd] = val
        return (("reg", instr.rd, val),)

    def exec_setbw(self, core: CoreState, instr: Instruction) -> tuple:
        if not self.bundle.variable_bitwidth_supported:
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       "setbw on fixed bit-width hardware")
        if not (1 <= instr.ibiw <= 32 and 1 <= instr.obiw <= 32):
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       f"bit widths {instr.ibiw}/{instr.obiw} out of [1, 32]")
        core.bw.ibiw = instr.ibiw
        core.bw.obiw = instr.obiw
        return (("bw", instr.ibiw, instr.obiw),)

    def exec_mvmul(self, core: CoreState, instr: Instruction) -> tuple:
        mats = core.group_mats
        if instr.imm_group not in mats:
            raise Trap(TrapKind.UNKNOWN_GROUP, core.core_id, core.pc,
                       f"group {instr.imm_group}")
        w, maxabs = mats[instr.imm_group]
        rows, cols = w.shape
        bw = core.bw
        x = self._read_vec(core, core.regs[instr.rs1], cols)
        lo, hi = -(1 << (bw.obiw - 1)), (1 << (bw.obiw - 1)) - 1
        relu = 0 if self.fault == "mvmul-no-relu" else instr.relu
        # int64 is exact when every row dot is provably below 2^62
        if maxabs * (1 << (bw.ibiw - 1)) * max(cols, 1) < (1 << 62):
            y = kernels.mvmul_i64(w, x, relu, lo, hi)
        else:
            y = np.empty(rows, np.int64)
            wl, xl = w.tolist(), x.tolist()
            for r in range(rows):
                acc = sum(wl[r][c] * xl[c] for c in range(cols))
                if relu and acc < 0:
                    acc = 0
                y[r] = min(max(acc, lo), hi)
        return (self._write_vec(core, core.regs[instr.rd], y, bw.obyw, bw.obiw),)

    _ELEMWISE = {
        Op.VVADD: (kernels.ADD, "i"), Op.VSUB: (kernels.SUB, "i"),
        Op.VMAX: (kernels.MAX, "i"), Op.VMUL: (kernels.MUL, "o"),
        Op.VVSLL: (kernels.SLL, "o"), Op.VVSRA: (kernels.SRA, "o"),
    }

    def exec_elementwise(self, core: CoreState, instr: Instruction) -> tuple:
        n = self._need_len(core, instr)
        bw, regs, sel, off = core.bw, core.regs, instr.sel, instr.offset_value
        if instr.op == Op.VRELU:
            a = self._read_vec(
                core, effective_address(regs[instr.rs1], sel, off, "rs1", bw.ibyw), n)
            out = kernels.relu_i64(a)
            dst = effective_address(regs[instr.rd], sel, off, "rd", bw.ibyw)
            return (self._write_vec(core, dst, out, bw.ibyw, bw.ibiw),)

        kind, width = self._ELEMWISE[instr.op]
        a = self._read_vec(
            core, effective_address(regs[instr.rs1], sel, off, "rs1", bw.ibyw), n)
        b = self._read_vec(
            core, effective_address(regs[instr.rs2], sel, off, "rs2", bw.ibyw), n)
        if kind in (kernels.SLL, kernels.SRA):
            neg = np.where(b < 0)[0]
            if len(neg):
                raise Trap(TrapKind.NEGATIVE_SHIFT, core.core_id, core.pc,
                           f"shift element {int(neg[0])} is {int(b[neg[0]])}")
            if self.fault == "shift-clamp-31":
                b = np.minimum(b, 31)
        out_biw = bw.ibiw if width == "i" else bw.obiw
        out_byw = bw.ibyw if width == "i" else bw.obyw
        out = kernels.elementwise(kind, a, b, out_biw)
        if self.fault == "vvadd-off-by-one" and instr.op == Op.VVADD and n:
            out[0] = _resext(out[0] + 1, out_biw)
        dst = effective_address(regs[instr.rd], sel, off, "rd", out_byw)
        return (self._write_vec(core, dst, out, out_byw, out_biw),)

    def _qformat(self, core: CoreState) -> tuple[int, int]:
        qf = self.bundle.activation_qformat
        if qf is not None:
            return qf
        return (core.bw.ibiw - 2, core.bw.obiw - 2)

    def exec_activation(self, core: CoreState, instr: Instruction) -> tuple:
        n = self._need_len(core, instr)
        bw, regs = core.bw, core.regs
        a = self._read_vec(core, effective_address(
            regs[instr.rs1], instr.sel, instr.offset_value, "rs1", bw.ibyw), n)
        frac_in, frac_out = self._qformat(core)
        kind = kernels.TANH if instr.op == Op.VTANH else kernels.SIGM
        lo, hi = -(1 << (bw.obiw - 1)), (1 << (bw.obiw - 1)) - 1
        out = kernels.act_q(kind, a, frac_in, frac_out, lo, hi)
        dst = effective_address(regs[instr.rd], instr.sel, instr.offset_value,
                                "rd", bw.obyw)
        return (self._write_vec(core, dst, out, bw.obyw, bw.obiw),)

    def exec_reduce(self, core: CoreState, instr: Instruction) -> tuple:
        n = self._need_len(core, instr)
        bw, regs = core.bw, core.regs
        if instr.op == Op.VDMUL:
            a = self._read_vec(core, effective_address(
                regs[instr.rs1], instr.sel, instr.offset_value, "rs1", bw.ibyw), n)
            b = self._read_vec(core, effective_address(
                regs[instr.rs2], instr.sel, instr.offset_value, "rs2", bw.ibyw), n)
            acc = kernels.dot_u64(a, b)
        else:  # VAVG: unconditional rs1 offset, strided gather
            stride = _sext32(regs[instr.rs2])
            if stride < 1:
                raise Trap(TrapKind.LENGTH_MISMATCH, core.core_id, core.pc,
                           f"vavg stride must be >= 1, got {stride}")
            base = regs[instr.rs1] + bw.ibyw * instr.offset_value
            self._lmem_check(core, base, (n - 1) * stride * bw.ibyw + bw.ibyw)
            a = kernels.read_elems_strided(core.lmem, base, n,
                                           stride * bw.ibyw, bw.ibyw, bw.ibiw)
            total = int(a.sum())
            q = abs(total) // n
            acc = q if total >= 0 else -q
        val = _resext(acc, bw.obiw)
        # single element at LMem[$rd]; the rd offset bit does not apply
        return (self._write_vec(core, regs[instr.rd],
                                np.array([val], np.int64), bw.obyw, bw.obiw),)

    def exec_move_resize(self, core: CoreState, instr: Instruction) -> tuple:
        if (instr.op != Op.VMV
                and not self.bundle.variable_bitwidth_supported):
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       f"{Op(instr.op).mnemonic} on fixed bit-width hardware")
        n = self._need_len(core, instr)
        bw, regs = core.bw, core.regs
        if instr.op == Op.VMV:
            stride = _sext32(regs[instr.rs2])
            src, dst = regs[instr.rs1], regs[instr.rd]
            first = src + min(0, (n - 1) * stride) * bw.ibyw
            last = src + max(0, (n - 1) * stride) * bw.ibyw
            self._lmem_check(core, first, last - first + bw.ibyw)
            self._lmem_check(core, dst, n * bw.ibyw)
            if self._vmv_overlap(src, stride, dst, n, bw.ibyw):
                if self.strict_overlap:
                    raise Trap(TrapKind.OVERLAP_UNDEFINED, core.core_id, core.pc,
                               "vmv source cells overlap destination")
            out = kernels.read_elems_strided(core.lmem, src, n,
                                             stride * bw.ibyw, bw.ibyw, bw.ibiw)
            return (self._write_vec(core, dst, out, bw.ibyw, bw.ibiw),)

        # vrsu / vrsl
        bound = _sext32(regs[instr.rs2])
        src = effective_address(regs[instr.rs1], instr.sel, instr.offset_value,
                                "rs1", bw.ibyw)
        dst = effective_address(regs[instr.rd], instr.sel, instr.offset_value,
                                "rd", bw.obyw)
        self._lmem_check(core, src, n * bw.ibyw)
        self._lmem_check(core, dst, n * bw.obyw)
        overlaps = _ranges_overlap(src, n * bw.ibyw, dst, n * bw.obyw)
        if overlaps and bw.obyw > bw.ibyw:
            raise Trap(TrapKind.OVERLAP_UNDEFINED, core.core_id, core.pc,
                       "vrsu/vrsl overlap is only allowed when the byte "
                       "width does not increase")
        upper = instr.op == Op.VRSU
        if overlaps:
            # in-place rescale is defined element by element, ascending
            for i in range(n):
                v = int(kernels.read_elems(core.lmem, src + i * bw.ibyw, 1,
                                           bw.ibyw, bw.ibiw)[0])
                v = min(v, bound) if upper else max(v, bound)
                kernels.write_elems(core.lmem, dst + i * bw.obyw,
                                    np.array([v], np.int64), bw.obyw, bw.obiw)
            lo = min(src, dst)
            hi = max(src + n * bw.ibyw, dst + n * bw.obyw)
            return (("lmem", lo, bytes(core.lmem[lo:hi])),)
        a = kernels.read_elems(core.lmem, src, n, bw.ibyw, bw.ibiw)
        out = np.minimum(a, bound) if upper else np.maximum(a, bound)
        return (self._write_vec(core, dst, out, bw.obyw, bw.obiw),)

    @staticmethod
    def _vmv_overlap(src: int, stride: int, dst: int, n: int, eb: int) -> bool:
        lo, hi = dst, dst + n * eb
        if stride == 0:
            return lo < src + eb and src < hi
        for i in range(n):
            p = src + i * stride * eb
            if lo < p + eb and p < hi:
                return True
        return False

    def exec_mem(self, core: CoreState, instr: Instruction) -> tuple:
        op, regs = instr.op, core.regs
        size, sel, off = instr.imm_size, instr.sel, instr.offset_value
        if op == Op.LDI:
            dst = regs[instr.rd] + off
            self._lmem_check(core, dst, size)
            core.lmem[dst:dst + size] = instr.imm8
            return (("lmem", dst, bytes(core.lmem[dst:dst + size])),)
        if op == Op.LD:
            gaddr = effective_address(self._gaddr(core, instr, "rs1"), sel, off, "rs1", 1)
            dst = effective_address(regs[instr.rd], sel, off, "rd", 1)
            self._gmem_check(core, gaddr, size)
            self._lmem_check(core, dst, size)
            core.lmem[dst:dst + size] = self.gmem[gaddr:gaddr + size]
            return (("lmem", dst, bytes(core.lmem[dst:dst + size])),)
        if op == Op.ST:
            gaddr = effective_address(self._gaddr(core, instr, "rd"), sel, off, "rd", 1)
            src = effective_address(regs[instr.rs1], sel, off, "rs1", 1)
            self._lmem_check(core, src, size)
            self._gmem_check(core, gaddr, size)
            self.gmem[gaddr:gaddr + size] = core.lmem[src:src + size]
            return (("gmem", gaddr, bytes(self.gmem[gaddr:gaddr + size])),)
        # LMV
        dst = effective_address(regs[instr.rd], sel, off, "rd", 1)
        src = effective_address(regs[instr.rs1], sel, off, "rs1", 1)
        self._lmem_check(core, src, size)
        self._lmem_check(core, dst, size)
        if _ranges_overlap(src, size, dst, size):
            if self.strict_overlap:
                raise Trap(TrapKind.OVERLAP_UNDEFINED, core.core_id, core.pc,
                           f"lmv [{src}, {src + size}) overlaps [{dst}, {dst + size})")
            core.lmem[dst:dst + size] = core.lmem[src:src + size].copy()
        else:
            core.lmem[dst:dst + size] = core.lmem[src:src + size]
        return (("lmem", dst, bytes(core.lmem[dst:dst + size])),)

    def exec_sync(self, core: CoreState, instr: Instruction) -> tuple:
        if instr.imm_core >= len(self.cores):
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       f"sync names core {instr.imm_core} of {len(self.cores)}")
        target = self.cores[instr.imm_core]
        if instr.imm_ev >= len(target.events):
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       f"event {instr.imm_ev} of {len(target.events)}")
        target.events[instr.imm_ev] = (target.events[instr.imm_ev] + 1) & U32
        return (("event", target.core_id, instr.imm_ev,
                 target.events[instr.imm_ev]),)

    def _exec_wait(self, core: CoreState, instr: Instruction) -> bool:
        if instr.imm_ev >= len(core.events):
            raise Trap(TrapKind.INVALID_FOR_HARDWARE, core.core_id, core.pc,
                       f"event {instr.imm_ev} of {len(core.events)}")
        if core.events[instr.imm_ev] != instr.imm_val:
            core.status = Status.BLOCKED_WAIT
            return False
        # check and reset are one atomic action
        core.events[instr.imm_ev] = 0
        self._retire(core, (("event", core.core_id, instr.imm_ev, 0),))
        return True

    def _try_rendezvous(self, core: CoreState, instr: Instruction) -> bool:
        sending = instr.op == Op.SEND
        if instr.imm_core >= len(self.cores) or instr.imm_core == core.core_id:
            core.status = Status.BLOCKED_SEND if sending else Status.BLOCKED_RECV
            return False
        other = self.cores[instr.imm_core]
        want = Op.RECV if sending else Op.SEND
        if (other.status == Status.FINISHED
                or other.current().op != want
                or other.current().imm_core != core.core_id):
            core.status = Status.BLOCKED_SEND if sending else Status.BLOCKED_RECV
            return False

        tx, rx = (core, other) if sending else (other, core)
        s_i, r_i = tx.current(), rx.current()
        if s_i.imm_size != r_i.imm_size:
            raise Trap(TrapKind.SIZE_MISMATCH_SEND_RECV, core.core_id, core.pc,
                       f"send {s_i.imm_size} bytes vs recv {r_i.imm_size}")
        src = tx.regs[s_i.rs1] + s_i.offset_value
        dst = rx.regs[r_i.rd] + r_i.offset_value
        self._lmem_check(tx, src, s_i.imm_size)
        self._lmem_check(rx, dst, r_i.imm_size)
        size = s_i.imm_size
        rx.lmem[dst:dst + size] = tx.lmem[src:src + size]
        pair = (tx.core_id, rx.core_id)
        self.mailboxes[pair] = self.mailboxes.get(pair, 0) + size
        self.bytes_sent += size
        # one step, two trace events: the send always precedes the recv
        self._emit(tx, (("msg", tx.core_id, rx.core_id, size),))
        tx.pc += 1
        tx.status = (Status.FINISHED if tx.pc >= len(tx.config.code)
                     else Status.READY)
        self._emit(rx, (("lmem", dst, bytes(rx.lmem[dst:dst + size])),))
        rx.pc += 1
        rx.status = (Status.FINISHED if rx.pc >= len(rx.config.code)
                     else Status.READY)
        return True


def _resext(v: int, biw: int) -> int:
    v &= (1 << biw) - 1
    return v - (1 << biw) if v >= (1 << (biw - 1)) else v


def _ranges_overlap(a: int, alen: int, b: int, blen: int) -> bool:
    return alen > 0 and blen > 0 and a < b + blen and b < a + alen


_DISPATCH = {
    Op.SLDI: Machine.exec_scalar, Op.SLD: Machine.exec_scalar,
    Op.SADD: Machine.exec_scalar, Op.SSUB: Machine.exec_scalar,
    Op.SMUL: Machine.exec_scalar, Op.SADDI: Machine.exec_scalar,
    Op.SMULI: Machine.exec_scalar,
    Op.SETBW: Machine.exec_setbw,
    Op.MVMUL: Machine.exec_mvmul,
    Op.VVADD: Machine.exec_elementwise, Op.VSUB: Machine.exec_elementwise,
    Op.VMUL: Machine.exec_elementwise, Op.VMAX: Machine.exec_elementwise,
    Op.VVSLL: Machine.exec_elementwise, Op.VVSRA: Machine.exec_elementwise,
    Op.VRELU: Machine.exec_elementwise,
    Op.VTANH: Machine.exec_activation, Op.VSIGM: Machine.exec_activation,
    Op.VDMUL: Machine.exec_reduce, Op.VAVG: Machine.exec_reduce,
    Op.VMV: Machine.exec_move_resize, Op.VRSU: Machine.exec_move_resize,
    Op.VRSL: Machine.exec_move_resize,
    Op.LD: Machine.exec_mem, Op.ST: Machine.exec_mem,
    Op.LDI: Machine.exec_mem, Op.LMV: Machine.exec_mem,
    Op.SYNC: Machine.exec_sync,
}


def load(bundle: ProgramBundle, **kwargs) -> Machine:
    """Build a powered-up Machine: cores at pc 0, events zero, gmem seeded."""
    return Machine(bundle, **kwargs)
