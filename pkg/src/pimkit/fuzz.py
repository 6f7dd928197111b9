"""Random generators for differential and property testing.

Everything is driven by an explicit random.Random so campaigns replay from a
seed. Three layers:

  - instruction(): one valid instruction for an encoding mode, any opcode
  - state injection helpers: small lmem/register images for single-step
    differential runs against the oracle
  - program/bundle builders: trap-free straight-line compute programs and
    multi-core bundles with matched communication, for determinism and
    whole-program differential campaigns
"""

from __future__ import annotations

import random

from .isa import (
    ENC32,
    ENC64,
    EVEN_REGS,
    PLAIN_OFFSET_OPS,
    SEL_MASK,
    EncodingMode,
    Instruction,
    Op,
    validate,
)
from .manifest import ArrayGroup, CoreConfig, LogicalArray, ProgramBundle

_BIW_FIELDS = ("mbiw", "ibiw", "obiw")


def instruction(rng: random.Random, op: Op | None = None,
                mode: EncodingMode = EncodingMode.WORD64) -> Instruction:
    """A uniformly random instruction that passes validate() and encodes."""
    if op is None:
        op = rng.choice(list(Op))
    table = ENC64[op] if mode == EncodingMode.WORD64 else ENC32[op]
    kw = {}
    for name, _, width, signed in table:
        if signed:
            kw[name] = rng.randrange(-(1 << (width - 1)), 1 << (width - 1))
        else:
            kw[name] = rng.randrange(1 << width)
    for name in _BIW_FIELDS:
        if name in kw:
            kw[name] = rng.randint(1, 32)
    for name in EVEN_REGS.get(op, ()):
        kw[name] &= ~1
    if "sel" in kw:
        kw["sel"] &= SEL_MASK.get(op, 0)
    if mode == EncodingMode.WORD32:
        kw.pop("sel", None)
        kw.pop("offset_value", None)
    instr = Instruction(op, **kw)
    assert not validate(instr), validate(instr)
    return instr


# --------------------------------------------------- state injection helpers

# ops that read a shift-count vector: its elements must be non-negative most
# of the time or every sample just exercises the NegativeShift trap
_SHIFT_OPS = (Op.VVSLL, Op.VVSRA)


def inject_instruction(rng: random.Random, op: Op,
                       n_groups: int = 1) -> Instruction:
    """An instruction shaped for single-step execution on a small core.

    Register indices stay in 0..7 (the harness fills those with in-range
    addresses); lengths and offsets are kept small enough that most samples
    execute, while a tail of samples still lands on traps.
    """
    kw: dict[str, int] = {}
    regs = list(range(8))
    for name, _, width, signed in ENC64[op]:
        if name in ("rd", "rs1", "rs2"):
            kw[name] = rng.choice(regs)
        elif name == "imm":
            kw[name] = rng.randrange(-(1 << 31), 1 << 31)
        elif name == "imm_len":
            kw[name] = rng.randint(1, 24) if rng.random() < 0.97 else 0
        elif name == "imm_size":
            kw[name] = rng.randint(0, 64)
        elif name == "offset_value":
            kw[name] = rng.randint(0, 8)
        elif name == "imm8":
            kw[name] = rng.randrange(256)
        elif name == "imm_group":
            kw[name] = (rng.randrange(n_groups) if rng.random() < 0.95
                        else n_groups + 3)
        elif name == "mbiw":
            kw[name] = rng.randint(1, 32)
        elif name in ("ibiw", "obiw"):
            kw[name] = rng.randint(1, 32)
        elif name == "relu":
            kw[name] = rng.randint(0, 1)
        elif name == "sel":
            kw[name] = rng.randrange(8) & SEL_MASK.get(op, 0)
        elif name == "imm_ev":
            kw[name] = rng.randrange(4)
        elif name == "imm_val":
            kw[name] = rng.randrange(4)
        elif name == "imm_core":
            kw[name] = rng.randrange(2)
        else:
            kw[name] = 0
    for name in EVEN_REGS.get(op, ()):
        kw[name] &= ~1
    return Instruction(op, **kw)


def inject_state(rng: random.Random, lmem_bytes: int) -> dict:
    """Random observable core state for a single-step differential pair."""
    # register values are mostly valid small addresses, element-aligned
    regs = []
    for i in range(32):
        r = rng.random()
        if r < 0.80:
            regs.append(rng.randrange(lmem_bytes // 2) & ~3)
        elif r < 0.92:
            regs.append(rng.randrange(1, 4))  # stride/bound-sized value
        elif r < 0.97:
            regs.append(rng.randrange(lmem_bytes * 2))  # may fall outside
        else:
            regs.append(rng.randrange(1 << 32))
    # odd registers back gmem address pairs; keep the high half zero so
    # ld/st mostly land inside the small global memory
    for i in range(1, 32, 2):
        if rng.random() < 0.9:
            regs[i] = 0
    lmem = rng.randbytes(lmem_bytes)
    ibiw = rng.choice((1, 4, 7, 8, 10, 16, 24, 32))
    obiw = rng.choice((1, 4, 7, 8, 10, 16, 24, 32))
    return {"regs": regs, "lmem": lmem, "ibiw": ibiw, "obiw": obiw}


def shiftsafe_lmem(rng: random.Random, lmem_bytes: int) -> bytes:
    """lmem image whose every byte is 0..63: shift vectors stay legal."""
    return bytes(b & 63 for b in rng.randbytes(lmem_bytes))


def random_weights(rng: random.Random, rows: int, cols: int,
                   mbiw: int = 8) -> list[list[int]]:
    lo, hi = -(1 << (mbiw - 1)), (1 << (mbiw - 1)) - 1
    return [[rng.randint(lo, hi) for _ in range(cols)] for _ in range(rows)]


def tiny_core(core_id: int, code: list[Instruction], lmem_bytes: int = 4096,
              weights: list[list[int]] | None = None) -> CoreConfig:
    """One-core config with an optional single-array group 0."""
    arrays, groups = [], []
    if weights is not None:
        rows, cols = len(weights), len(weights[0])
        arrays = [LogicalArray(0, rows, cols, weights)]
        groups = [ArrayGroup(0, [(0, 0, 0)], rows, cols)]
    return CoreConfig(core_id=core_id, code=code, local_mem_bytes=lmem_bytes,
                      event_register_count=4, arrays=arrays, groups=groups)


# ------------------------------------------------------ program-level fuzz

# lmem block layout used by generated programs: four disjoint 256-byte
# regions, so vector ops never overlap and never leave bounds
_BLK_A, _BLK_B, _BLK_SHIFT, _BLK_DST = 0x000, 0x100, 0x200, 0x300
_PROG_LMEM = 4096
_GMEM = 8192


def _prelude(rng: random.Random) -> list[Instruction]:
    """Set up registers and fill the source blocks with data."""
    code = [
        Instruction(Op.SLDI, rd=1, imm=_BLK_A),
        Instruction(Op.SLDI, rd=2, imm=_BLK_B),
        Instruction(Op.SLDI, rd=3, imm=_BLK_SHIFT),
        Instruction(Op.SLDI, rd=4, imm=_BLK_DST),
        Instruction(Op.SLDI, rd=5, imm=rng.randint(1, 3)),   # stride
        Instruction(Op.SLDI, rd=6, imm=rng.randint(-50, 50)),  # clamp bound
        Instruction(Op.LDI, rd=1, imm8=rng.randrange(256), imm_size=256),
        Instruction(Op.LDI, rd=2, imm8=rng.randrange(256), imm_size=256),
        # shift counts: bytes 0..63 keep vvsll/vvsra trap-free
        Instruction(Op.LDI, rd=3, imm8=rng.randrange(64), imm_size=256),
    ]
    return code


def _compute_op(rng: random.Random, has_group: bool) -> Instruction:
    """One random trap-free vector/scalar instruction over the fixed blocks."""
    n = rng.randint(1, 24)
    choice = rng.randrange(14 if has_group else 13)
    if choice == 0:
        return Instruction(Op.VVADD, rd=4, rs1=1, rs2=2, imm_len=n)
    if choice == 1:
        return Instruction(Op.VSUB, rd=4, rs1=1, rs2=2, imm_len=n)
    if choice == 2:
        return Instruction(Op.VMUL, rd=4, rs1=1, rs2=2, imm_len=n)
    if choice == 3:
        return Instruction(Op.VMAX, rd=4, rs1=1, rs2=2, imm_len=n)
    if choice == 4:
        return Instruction(Op.VVSLL, rd=4, rs1=1, rs2=3, imm_len=n)
    if choice == 5:
        return Instruction(Op.VVSRA, rd=4, rs1=1, rs2=3, imm_len=n)
    if choice == 6:
        return Instruction(Op.VRELU, rd=4, rs1=1, imm_len=n)
    if choice == 7:
        return Instruction(rng.choice((Op.VTANH, Op.VSIGM)),
                           rd=4, rs1=1, imm_len=n)
    if choice == 8:
        return Instruction(Op.VDMUL, rd=4, rs1=1, rs2=2, imm_len=n)
    if choice == 9:
        return Instruction(Op.VAVG, rd=4, rs1=1, rs2=5, imm_len=n,
                           offset_value=rng.randint(0, 4))
    if choice == 10:
        return Instruction(Op.VMV, rd=4, rs1=1, rs2=5, imm_len=n)
    if choice == 11:
        return Instruction(rng.choice((Op.VRSU, Op.VRSL)),
                           rd=4, rs1=1, rs2=6, imm_len=n)
    if choice == 12:
        return Instruction(rng.choice((Op.SADD, Op.SSUB, Op.SMUL)),
                           rd=rng.randint(7, 12), rs1=5, rs2=6)
    return Instruction(Op.MVMUL, rd=4, rs1=1, mbiw=8,
                       relu=rng.randint(0, 1), imm_group=0)


def compute_program(rng: random.Random, length: int = 40,
                    with_group: bool = True) -> list[Instruction]:
    """Straight-line, trap-free single-core program."""
    code = _prelude(rng)
    for _ in range(length):
        code.append(_compute_op(rng, with_group))
    return code


def single_core_bundle(rng: random.Random, length: int = 40) -> ProgramBundle:
    w = random_weights(rng, rng.randint(1, 8), rng.randint(1, 8))
    core = tiny_core(0, compute_program(rng, length), _PROG_LMEM, weights=w)
    return ProgramBundle(EncodingMode.WORD64, [core], global_mem_bytes=_GMEM)


def multi_core_bundle(rng: random.Random, n_cores: int = 3,
                      length: int = 25) -> ProgramBundle:
    """Cores computing independently, then a rendezvous ring, a sync ring,
    and a final st to distinct gmem regions. Deadlock-free by construction.
    """
    cores = []
    size = rng.choice((4, 8, 16))  # one ring-wide size: pairs must agree
    for cid in range(n_cores):
        w = random_weights(rng, rng.randint(1, 6), rng.randint(1, 6))
        code = compute_program(rng, length)
        nxt, prv = (cid + 1) % n_cores, (cid - 1) % n_cores
        if cid % 2 == 0:
            code.append(Instruction(Op.SEND, rs1=1, imm_core=nxt, imm_size=size))
            code.append(Instruction(Op.RECV, rd=4, imm_core=prv, imm_size=size))
        else:
            code.append(Instruction(Op.RECV, rd=4, imm_core=prv, imm_size=size))
            code.append(Instruction(Op.SEND, rs1=1, imm_core=nxt, imm_size=size))
        code.append(Instruction(Op.SYNC, imm_ev=0, imm_core=nxt))
        code.append(Instruction(Op.WAIT, imm_ev=0, imm_val=1))
        # publish a slice of lmem to this core's gmem window
        code.append(Instruction(Op.SLDI, rd=8, imm=cid * 64))
        code.append(Instruction(Op.SLDI, rd=9, imm=0))
        code.append(Instruction(Op.ST, rd=8, rs1=1, imm_size=64))
        cores.append(tiny_core(cid, code, _PROG_LMEM, weights=w))
    return ProgramBundle(EncodingMode.WORD64, cores, global_mem_bytes=_GMEM)


def random_bundle_for_roundtrip(rng: random.Random) -> ProgramBundle:
    """Structurally varied valid bundle for serialize/parse property tests."""
    n_cores = rng.randint(1, 3)
    cores = []
    for cid in range(n_cores):
        arrays, groups = [], []
        for aid in range(rng.randint(0, 3)):
            rows, cols = rng.randint(1, 5), rng.randint(1, 5)
            arrays.append(LogicalArray(aid, rows, cols,
                                       random_weights(rng, rows, cols)))
        for gid, arr in enumerate(arrays):
            groups.append(ArrayGroup(gid, [(arr.array_id, 0, 0)],
                                     arr.rows, arr.cols))
        code = []
        for _ in range(rng.randint(0, 12)):
            op = rng.choice((Op.SLDI, Op.SADD, Op.VVADD, Op.LDI, Op.VRELU,
                             Op.SETBW, Op.VMV, Op.SMULI))
            instr = instruction(rng, op)
            if op == Op.VVADD or op == Op.VRELU or op == Op.VMV:
                instr = instr.replace(imm_len=max(1, instr.imm_len % 64))
            code.append(instr)
        cores.append(CoreConfig(
            core_id=cid, code=code,
            local_mem_bytes=rng.choice((4096, 65536, 262144)),
            event_register_count=rng.choice((4, 16)),
            arrays=arrays, groups=groups,
            initial_ibiw=rng.randint(1, 32), initial_obiw=rng.randint(1, 32)))
    init = []
    if rng.random() < 0.5:
        init.append((rng.randrange(128),
                     bytes(rng.randrange(256) for _ in range(rng.randint(1, 16)))))
    return ProgramBundle(
        mode=EncodingMode.WORD64,
        cores=cores,
        global_mem_bytes=rng.choice((4096, 16384)),
        global_mem_init=init,
        activation_qformat=(rng.randint(0, 12), rng.randint(0, 12))
        if rng.random() < 0.5 else None,
        variable_bitwidth_supported=True,
    )
