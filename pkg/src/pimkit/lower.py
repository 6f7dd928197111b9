"""Minimal MLP-to-ISA lowering: the toolchain role at demonstration scale.

Takes small multi-layer perceptrons with integer weights and emits fully
unrolled, branch-free per-core programs: weights become array groups, every
matrix-vector product is one mvmul, biases are added with vvadd, ReLU fuses
into mvmul's relu flag, sigmoid/tanh become vsigm/vtanh. Layers move between
cores either by send/recv rendezvous or through a global-memory staging
region guarded by sync/wait. One layer's output rows can be split across
cores; the collector core receives the parts into adjacent regions, so
concatenation is free.

v1 limitation: one element width for the whole network (the bias vvadd reads
the mvmul output at ibiw, and re-quantization between layers is not encoded),
so specs with differing per-layer widths are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .isa import EncodingMode, Instruction, Op
from .manifest import (
    DEFAULT_EVENT_REGS,
    DEFAULT_LOCAL_MEM,
    ArrayGroup,
    CoreConfig,
    LogicalArray,
    ProgramBundle,
)

SENDRECV = "sendrecv"
GMEM = "gmem"
ACTIVATIONS = (None, "relu", "sigmoid", "tanh")


class LayerTooLargeForLocalMemory(ValueError):
    pass


class WidthUnsupported(ValueError):
    pass


@dataclass
class MlpSpec:
    layer_dims: list[int]
    weights: list[list[list[int]]]
    biases: list[list[int]]
    activations: list[str | None]
    widths: list[tuple[int, int]] | None = None     # per layer (ibiw, obiw)
    core_assignment: list[int | list[int]] | None = None
    transport: str = SENDRECV
    qformat: tuple[int, int] | None = None
    local_mem_bytes: int = DEFAULT_LOCAL_MEM
    global_mem_bytes: int = 1 << 20

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @classmethod
    def from_json(cls, data: bytes | str) -> "MlpSpec":
        obj = json.loads(data)
        qf = obj.get("qformat")
        widths = obj.get("widths")
        return cls(
            layer_dims=obj["layer_dims"],
            weights=obj["weights"],
            biases=obj["biases"],
            activations=obj.get("activations", [None] * (len(obj["layer_dims"]) - 1)),
            widths=[tuple(w) for w in widths] if widths else None,
            core_assignment=obj.get("core_assignment"),
            transport=obj.get("transport", SENDRECV),
            qformat=tuple(qf) if qf else None,
            local_mem_bytes=obj.get("local_mem_bytes", DEFAULT_LOCAL_MEM),
            global_mem_bytes=obj.get("global_mem_bytes", 1 << 20),
        )

    def validated_width(self) -> int:
        widths = self.widths or [(8, 8)] * self.n_layers
        flat = {w for pair in widths for w in pair}
        if len(flat) != 1:
            raise WidthUnsupported(
                f"one element width for the whole network is required, got "
                f"{sorted(flat)}: the bias vvadd reads mvmul output at ibiw "
                f"and no re-quantization step is generated")
        biw = flat.pop()
        if not 1 <= biw <= 32:
            raise WidthUnsupported(f"element width {biw} out of [1, 32]")
        return biw

    def check(self) -> None:
        dims = self.layer_dims
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims needs >= 2 positive entries: {dims}")
        n = self.n_layers
        if len(self.weights) != n or len(self.biases) != n:
            raise ValueError("need one weight matrix and bias per layer")
        if len(self.activations) != n:
            raise ValueError("need one activation entry per layer")
        for i in range(n):
            rows, cols = dims[i + 1], dims[i]
            w = self.weights[i]
            if len(w) != rows or any(len(r) != cols for r in w):
                raise ValueError(f"layer {i} weights are not {rows}x{cols}")
            if len(self.biases[i]) != rows:
                raise ValueError(f"layer {i} bias length != {rows}")
            if self.activations[i] not in ACTIVATIONS:
                raise ValueError(f"unknown activation {self.activations[i]!r}")
        if self.transport not in (SENDRECV, GMEM):
            raise ValueError(f"unknown transport {self.transport!r}")


def split_layer_rows(rows: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous (start, count) row ranges; the first rows%parts parts get
    one extra row, e.g. 8 rows in 3 parts -> 3, 3, 2."""
    if not 1 <= parts <= rows:
        raise ValueError(f"parts must be in [1, {rows}], got {parts}")
    base, rem = divmod(rows, parts)
    out, start = [], 0
    for p in range(parts):
        count = base + (1 if p < rem else 0)
        out.append((start, count))
        start += count
    return out


def _needed_mbiw(w: list[list[int]]) -> int:
    m = 1
    for row in w:
        for v in row:
            bits = (v.bit_length() if v >= 0 else (-v - 1).bit_length()) + 1
            m = max(m, bits)
    if m > 32:
        raise ValueError("weights exceed 32-bit signed range")
    return m


@dataclass
class LoweringPlan:
    bundle: ProgramBundle
    input_addr: int            # gmem byte address of the network input
    output_addr: int           # gmem byte address of the network output
    input_len: int             # elements
    output_len: int
    ebytes: int
    biw: int
    layouts: dict[int, dict[str, int]] = field(default_factory=dict)


class _CoreBuild:
    def __init__(self, core_id: int, local_mem_bytes: int):
        self.core_id = core_id
        self.code: list[Instruction] = []
        self.arrays: list[LogicalArray] = []
        self.groups: list[ArrayGroup] = []
        self.cursor = 0
        self.next_ev = 0
        self.local_mem_bytes = local_mem_bytes
        self.layout: dict[str, int] = {}

    def alloc(self, name: str, nbytes: int, ebytes: int) -> int:
        align = 4 * ebytes if ebytes == 3 else max(4, ebytes)
        self.cursor = (self.cursor + align - 1) // align * align
        addr = self.cursor
        self.cursor += nbytes
        if self.cursor > self.local_mem_bytes:
            raise LayerTooLargeForLocalMemory(
                f"core {self.core_id} needs {self.cursor} bytes of local "
                f"memory for {name}, has {self.local_mem_bytes}")
        self.layout[name] = addr
        return addr

    def add_group(self, weights: list[list[int]]) -> int:
        aid = len(self.arrays)
        rows, cols = len(weights), len(weights[0])
        self.arrays.append(LogicalArray(aid, rows, cols, weights))
        gid = len(self.groups)
        self.groups.append(ArrayGroup(gid, [(aid, 0, 0)], rows, cols))
        return gid

    def take_event(self) -> int:
        ev = self.next_ev
        self.next_ev += 1
        if ev >= DEFAULT_EVENT_REGS:
            raise LayerTooLargeForLocalMemory(
                f"core {self.core_id} needs more than "
                f"{DEFAULT_EVENT_REGS} event registers")
        return ev

    def emit(self, *instrs: Instruction) -> None:
        self.code.extend(instrs)


class _GmemAlloc:
    def __init__(self, limit: int):
        self.cursor = 0
        self.limit = limit
        self.init: list[tuple[int, bytes]] = []

    def alloc(self, nbytes: int, ebytes: int, data: bytes | None = None) -> int:
        align = 4 * ebytes if ebytes == 3 else max(4, ebytes)
        self.cursor = (self.cursor + align - 1) // align * align
        addr = self.cursor
        self.cursor += nbytes
        if self.cursor > self.limit:
            raise LayerTooLargeForLocalMemory(
                f"global memory overflow: {self.cursor} > {self.limit}")
        if data is not None:
            self.init.append((addr, data))
        return addr


def _pack(vals: list[int], ebytes: int, biw: int) -> bytes:
    out = bytearray()
    for v in vals:
        out += (v & ((1 << biw) - 1)).to_bytes(ebytes, "little")
    return bytes(out)


def _ld(dst_lmem: int, gmem_addr: int, nbytes: int) -> list[Instruction]:
    return [
        Instruction(Op.SLDI, rd=2, imm=dst_lmem),
        Instruction(Op.SLDI, rd=8, imm=gmem_addr),
        Instruction(Op.SLDI, rd=9, imm=0),
        Instruction(Op.LD, rd=2, rs1=8, imm_size=nbytes),
    ]


def _st(src_lmem: int, gmem_addr: int, nbytes: int) -> list[Instruction]:
    return [
        Instruction(Op.SLDI, rd=1, imm=src_lmem),
        Instruction(Op.SLDI, rd=8, imm=gmem_addr),
        Instruction(Op.SLDI, rd=9, imm=0),
        Instruction(Op.ST, rd=8, rs1=1, imm_size=nbytes),
    ]


def plan_mlp(spec: MlpSpec) -> LoweringPlan:
    """Lower an MLP to a bundle plus the addresses a caller needs to run it."""
    spec.check()
    biw = spec.validated_width()
    ebytes = (biw + 7) // 8
    dims = spec.layer_dims
    n = spec.n_layers
    assignment = spec.core_assignment or [0] * n
    if len(assignment) != n:
        raise ValueError("core_assignment needs one entry per layer")

    core_ids: set[int] = set()
    for a in assignment:
        core_ids.update(a if isinstance(a, list) else [a])
    if core_ids != set(range(len(core_ids))):
        raise ValueError(f"core ids must be dense from 0, got {sorted(core_ids)}")
    builds = {cid: _CoreBuild(cid, spec.local_mem_bytes) for cid in sorted(core_ids)}
    gmem = _GmemAlloc(spec.global_mem_bytes)

    input_addr = gmem.alloc(dims[0] * ebytes, ebytes)
    output_addr = gmem.alloc(dims[-1] * ebytes, ebytes)
    bias_addrs = [gmem.alloc(dims[i + 1] * ebytes, ebytes,
                             _pack(spec.biases[i], ebytes, biw))
                  for i in range(n)]

    def transport(src: _CoreBuild, src_addr: int, dst: _CoreBuild,
                  dst_addr: int, nbytes: int) -> None:
        if src.core_id == dst.core_id:
            if src_addr != dst_addr:
                src.emit(Instruction(Op.SLDI, rd=1, imm=src_addr),
                         Instruction(Op.SLDI, rd=2, imm=dst_addr),
                         Instruction(Op.LMV, rd=2, rs1=1, imm_size=nbytes))
            return
        if spec.transport == SENDRECV:
            src.emit(Instruction(Op.SLDI, rd=1, imm=src_addr),
                     Instruction(Op.SEND, rs1=1, imm_core=dst.core_id,
                                 imm_size=nbytes))
            dst.emit(Instruction(Op.SLDI, rd=2, imm=dst_addr),
                     Instruction(Op.RECV, rd=2, imm_core=src.core_id,
                                 imm_size=nbytes))
        else:
            stage = gmem.alloc(nbytes, 1)
            ev = dst.take_event()
            src.emit(*_st(src_addr, stage, nbytes))
            src.emit(Instruction(Op.SYNC, imm_ev=ev, imm_core=dst.core_id))
            dst.emit(Instruction(Op.WAIT, imm_ev=ev, imm_val=1))
            dst.emit(*_ld(dst_addr, stage, nbytes))

    def emit_fragment(b: _CoreBuild, layer: int, rows: tuple[int, int],
                      x_addr: int, out_addr: int) -> None:
        """mvmul + bias + activation for a contiguous row slice."""
        start, count = rows
        w_slice = spec.weights[layer][start:start + count]
        gid = b.add_group(w_slice)
        act = spec.activations[layer]
        bias_lmem = b.alloc(f"bias{layer}_{start}", count * ebytes, ebytes)
        b.emit(*_ld(bias_lmem, bias_addrs[layer] + start * ebytes,
                    count * ebytes))
        b.emit(Instruction(Op.SLDI, rd=1, imm=x_addr),
               Instruction(Op.SLDI, rd=2, imm=out_addr),
               Instruction(Op.MVMUL, rd=2, rs1=1,
                           mbiw=_needed_mbiw(w_slice),
                           relu=1 if act == "relu" else 0, imm_group=gid))
        b.emit(Instruction(Op.SLDI, rd=3, imm=bias_lmem),
               Instruction(Op.VVADD, rd=2, rs1=2, rs2=3, imm_len=count))
        if act in ("sigmoid", "tanh"):
            op = Op.VSIGM if act == "sigmoid" else Op.VTANH
            b.emit(Instruction(op, rd=2, rs1=2, imm_len=count))

    # walk layers; vec_core/vec_addr track where the live vector sits
    vec_core = None  # the input still lives in global memory
    vec_addr = input_addr

    for layer in range(n):
        a = assignment[layer]
        parts = a if isinstance(a, list) else [a]
        rows_total, cols = dims[layer + 1], dims[layer]
        ranges = split_layer_rows(rows_total, len(parts))
        collector = builds[parts[0]]
        out_addr = collector.alloc(f"out{layer}", rows_total * ebytes, ebytes)

        # land the input vector on every participating core
        x_addrs = {}
        for cid in parts:
            b = builds[cid]
            if vec_core is None:
                x = b.alloc(f"in{layer}", cols * ebytes, ebytes)
                b.emit(*_ld(x, input_addr, cols * ebytes))
                x_addrs[cid] = x
            elif cid == vec_core:
                x_addrs[cid] = vec_addr
            else:
                x = b.alloc(f"in{layer}", cols * ebytes, ebytes)
                transport(builds[vec_core], vec_addr, b, x, cols * ebytes)
                x_addrs[cid] = x

        # compute fragments; non-collector parts stage locally, then send
        for (start, count), cid in zip(ranges, parts):
            b = builds[cid]
            if cid == parts[0]:
                emit_fragment(b, layer, (start, count), x_addrs[cid],
                              out_addr + start * ebytes)
            else:
                frag = b.alloc(f"frag{layer}_{start}", count * ebytes, ebytes)
                emit_fragment(b, layer, (start, count), x_addrs[cid], frag)
                transport(b, frag, collector, out_addr + start * ebytes,
                          count * ebytes)
        vec_core, vec_addr = collector.core_id, out_addr

    builds[vec_core].emit(*_st(vec_addr, output_addr, dims[-1] * ebytes))

    cores = [CoreConfig(core_id=cid, code=b.code,
                        local_mem_bytes=spec.local_mem_bytes,
                        event_register_count=DEFAULT_EVENT_REGS,
                        arrays=b.arrays, groups=b.groups,
                        initial_ibiw=biw, initial_obiw=biw)
             for cid, b in sorted(builds.items())]
    bundle = ProgramBundle(
        mode=EncodingMode.WORD64, cores=cores,
        global_mem_bytes=spec.global_mem_bytes,
        global_mem_init=gmem.init,
        activation_qformat=spec.qformat,
        variable_bitwidth_supported=True,
    )
    return LoweringPlan(bundle, input_addr, output_addr, dims[0], dims[-1],
                        ebytes, biw, {cid: b.layout for cid, b in builds.items()})


def lower_mlp(spec: MlpSpec) -> ProgramBundle:
    return plan_mlp(spec).bundle


def ref_mlp(spec: MlpSpec, x: list[int]) -> list[int]:
    """Layer-by-layer reference composition using the oracle's fc rule."""
    from .oracle import ref_activation_vec, ref_fc_layer

    biw = spec.validated_width()
    qf = spec.qformat or (biw - 2, biw - 2)
    vec = list(x)
    for i in range(spec.n_layers):
        act = spec.activations[i]
        vec = ref_fc_layer(spec.weights[i], vec, spec.biases[i],
                           1 if act == "relu" else 0, (biw, biw))
        if act in ("sigmoid", "tanh"):
            vec = ref_activation_vec(vec, "sigm" if act == "sigmoid" else "tanh",
                                     qf[0], qf[1], biw)
    return vec
