"""Instruction model and bit-exact binary encoding for the PIM accelerator ISA.

The ISA has 31 fixed-length instructions in three groups: 7 scalar/register
ops, 16 matrix/vector ops, and 8 communication/synchronization ops.  Words
are either 64-bit or 32-bit; the 32-bit mode drops the offset mechanism
entirely and shrinks immediates.

64-bit word layout (bit 63 = MSB):

    [63:58] opcode   [57:53] rd   [52:48] rs1   [47:43] rs2
    [42:40] offset_select   [39:32] aux8   [31:0] per-opcode immediates

32-bit word layout:

    [31:26] opcode   [25:21] rd   [20:16] rs1   [15:11] rs2
    [15:0] or [10:0] per-opcode immediates (rs2 slot reused when free)

Per-opcode placements are defined bit-exactly in ENC64/ENC32 below.  Bits not
claimed by an opcode are reserved and must be zero; decode rejects words with
reserved bits set, which keeps encode injective and decode∘encode = identity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields as dc_fields
from enum import IntEnum


class Op(IntEnum):
    """Opcode numbers. 0 and 32..63 are unassigned."""

    SLDI = 1
    SLD = 2
    SADD = 3
    SSUB = 4
    SMUL = 5
    SADDI = 6
    SMULI = 7
    SETBW = 8
    MVMUL = 9
    VVADD = 10
    VSUB = 11
    VMUL = 12
    VDMUL = 13
    VMAX = 14
    VVSLL = 15
    VVSRA = 16
    VAVG = 17
    VRELU = 18
    VTANH = 19
    VSIGM = 20
    VMV = 21
    VRSU = 22
    VRSL = 23
    LD = 24
    ST = 25
    LDI = 26
    LMV = 27
    SEND = 28
    RECV = 29
    WAIT = 30
    SYNC = 31

    @property
    def mnemonic(self) -> str:
        return self.name.lower()


class EncodingMode(IntEnum):
    WORD64 = 64
    WORD32 = 32

    @property
    def word_bytes(self) -> int:
        return self.value // 8


class IsaError(Exception):
    """Base class for encode/decode/validation errors."""


class FieldOverflow(IsaError):
    def __init__(self, field: str, value: int, width: int):
        self.field, self.value, self.width = field, value, width
        super().__init__(f"field {field}={value} does not fit {width} bits")


class EvenRegisterRequired(IsaError):
    def __init__(self, op: str, field: str):
        self.op, self.field = op, field
        super().__init__(f"{op}: {field} must be an even register index")


class OffsetUnsupportedIn32BitMode(IsaError):
    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: offsets are not supported in 32-bit mode")


class UnknownOpcode(IsaError):
    def __init__(self, bits: int):
        self.bits = bits
        super().__init__(f"unknown opcode bits 0b{bits:06b}")


class ReservedFieldNonzero(IsaError):
    def __init__(self, op: str, field: str):
        self.op, self.field = op, field
        super().__init__(f"{op}: reserved field {field} is nonzero")


@dataclass(frozen=True)
class Instruction:
    """One instruction with all operand fields; unused fields stay zero.

    `offset_value` holds both the element offset of vector ops and the byte
    offset of sld/ld/st/ldi/lmv/send/recv. `imm` is the signed 32-bit
    immediate of sldi/saddi/smuli.
    """

    op: Op
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    sel: int = 0
    offset_value: int = 0
    imm: int = 0
    imm_len: int = 0
    imm_size: int = 0
    imm_core: int = 0
    imm_ev: int = 0
    imm_val: int = 0
    imm_group: int = 0
    imm8: int = 0
    mbiw: int = 0
    relu: int = 0
    ibiw: int = 0
    obiw: int = 0

    def replace(self, **kw) -> "Instruction":
        d = {f.name: getattr(self, f.name) for f in dc_fields(self)}
        d.update(kw)
        return Instruction(**d)


# (field, lsb, width, signed) placements per opcode.  Shared shapes first.
def _v3(*extra):  # rd, rs1, rs2 + extras
    return (("rd", 53, 5, False), ("rs1", 48, 5, False), ("rs2", 43, 5, False)) + extra


_SEL = ("sel", 40, 3, False)
_LEN = ("imm_len", 16, 16, False)
_OFF = ("offset_value", 0, 16, False)
_SIZE = ("imm_size", 16, 16, False)
_VEC3 = _v3(_SEL, _LEN, _OFF)

ENC64: dict[Op, tuple] = {
    Op.SLDI: (("rd", 53, 5, False), ("imm", 0, 32, True)),
    Op.SLD: (("rd", 53, 5, False), ("rs1", 48, 5, False), _OFF),
    Op.SADD: _v3(),
    Op.SSUB: _v3(),
    Op.SMUL: _v3(),
    Op.SADDI: (("rd", 53, 5, False), ("rs1", 48, 5, False), ("imm", 0, 32, True)),
    Op.SMULI: (("rd", 53, 5, False), ("rs1", 48, 5, False), ("imm", 0, 32, True)),
    Op.SETBW: (("ibiw", 32, 8, False), ("obiw", 0, 8, False)),
    Op.MVMUL: (("rd", 53, 5, False), ("rs1", 48, 5, False),
               ("relu", 32, 1, False), ("mbiw", 33, 6, False),
               ("imm_group", 16, 16, False)),
    Op.VVADD: _VEC3,
    Op.VSUB: _VEC3,
    Op.VMUL: _VEC3,
    Op.VDMUL: _VEC3,
    Op.VMAX: _VEC3,
    Op.VVSLL: _VEC3,
    Op.VVSRA: _VEC3,
    Op.VAVG: _v3(_LEN, _OFF),
    Op.VRELU: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _LEN, _OFF),
    Op.VTANH: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _LEN, _OFF),
    Op.VSIGM: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _LEN, _OFF),
    Op.VMV: _v3(_LEN),
    Op.VRSU: _VEC3,
    Op.VRSL: _VEC3,
    Op.LD: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _SIZE, _OFF),
    Op.ST: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _SIZE, _OFF),
    Op.LDI: (("rd", 53, 5, False), ("imm8", 32, 8, False), _SIZE, _OFF),
    Op.LMV: (("rd", 53, 5, False), ("rs1", 48, 5, False), _SEL, _SIZE, _OFF),
    Op.SEND: (("rs1", 48, 5, False), ("imm_core", 32, 8, False), _SIZE, _OFF),
    Op.RECV: (("rd", 53, 5, False), ("imm_core", 32, 8, False), _SIZE, _OFF),
    Op.WAIT: (("imm_ev", 32, 8, False), ("imm_val", 0, 16, False)),
    Op.SYNC: (("imm_ev", 32, 8, False), ("imm_core", 0, 16, False)),
}


def _w3(*extra):
    return (("rd", 21, 5, False), ("rs1", 16, 5, False), ("rs2", 11, 5, False)) + extra


_LEN11 = ("imm_len", 0, 11, False)

ENC32: dict[Op, tuple] = {
    Op.SLDI: (("rd", 21, 5, False), ("imm", 0, 16, True)),
    Op.SLD: (("rd", 21, 5, False), ("rs1", 16, 5, False)),
    Op.SADD: _w3(),
    Op.SSUB: _w3(),
    Op.SMUL: _w3(),
    Op.SADDI: (("rd", 21, 5, False), ("rs1", 16, 5, False), ("imm", 0, 16, True)),
    Op.SMULI: (("rd", 21, 5, False), ("rs1", 16, 5, False), ("imm", 0, 16, True)),
    Op.SETBW: (("ibiw", 6, 6, False), ("obiw", 0, 6, False)),
    Op.MVMUL: (("rd", 21, 5, False), ("rs1", 16, 5, False),
               ("mbiw", 10, 6, False), ("relu", 9, 1, False),
               ("imm_group", 0, 9, False)),
    Op.VVADD: _w3(_LEN11),
    Op.VSUB: _w3(_LEN11),
    Op.VMUL: _w3(_LEN11),
    Op.VDMUL: _w3(_LEN11),
    Op.VMAX: _w3(_LEN11),
    Op.VVSLL: _w3(_LEN11),
    Op.VVSRA: _w3(_LEN11),
    Op.VAVG: _w3(_LEN11),
    Op.VRELU: (("rd", 21, 5, False), ("rs1", 16, 5, False), _LEN11),
    Op.VTANH: (("rd", 21, 5, False), ("rs1", 16, 5, False), _LEN11),
    Op.VSIGM: (("rd", 21, 5, False), ("rs1", 16, 5, False), _LEN11),
    Op.VMV: _w3(_LEN11),
    Op.VRSU: _w3(_LEN11),
    Op.VRSL: _w3(_LEN11),
    Op.LD: (("rd", 21, 5, False), ("rs1", 16, 5, False), ("imm_size", 0, 16, False)),
    Op.ST: (("rd", 21, 5, False), ("rs1", 16, 5, False), ("imm_size", 0, 16, False)),
    Op.LDI: (("rd", 21, 5, False), ("imm8", 8, 8, False), ("imm_size", 0, 8, False)),
    Op.LMV: (("rd", 21, 5, False), ("rs1", 16, 5, False), ("imm_size", 0, 16, False)),
    Op.SEND: (("rs1", 16, 5, False), ("imm_core", 8, 8, False), ("imm_size", 0, 8, False)),
    Op.RECV: (("rd", 21, 5, False), ("imm_core", 8, 8, False), ("imm_size", 0, 8, False)),
    Op.WAIT: (("imm_ev", 8, 8, False), ("imm_val", 0, 8, False)),
    Op.SYNC: (("imm_ev", 8, 8, False), ("imm_core", 0, 8, False)),
}

_OPCODE_LSB = {EncodingMode.WORD64: 58, EncodingMode.WORD32: 26}
_TABLES = {EncodingMode.WORD64: ENC64, EncodingMode.WORD32: ENC32}

# Global-memory base registers must be even: the 64-bit address lives in the
# even/odd register pair (low half in the even one).
EVEN_REGS: dict[Op, tuple[str, ...]] = {
    Op.SLD: ("rs1",),
    Op.LD: ("rs1",),
    Op.ST: ("rd",),
}

# Allowed offset_select bits per opcode (bit0=rd, bit1=rs1, bit2=rs2).
SEL_MASK: dict[Op, int] = {
    Op.VVADD: 0b111, Op.VSUB: 0b111, Op.VMUL: 0b111, Op.VMAX: 0b111,
    Op.VVSLL: 0b111, Op.VVSRA: 0b111,
    Op.VDMUL: 0b110,                       # result is a single element at $rd
    Op.VRELU: 0b011, Op.VTANH: 0b011, Op.VSIGM: 0b011,
    Op.VRSU: 0b011, Op.VRSL: 0b011,        # $rs2 is a bound, not an address
    Op.LD: 0b011, Op.ST: 0b011, Op.LMV: 0b011,
}

# Opcodes whose offset_value applies unconditionally (no select mechanism).
PLAIN_OFFSET_OPS = frozenset({Op.SLD, Op.VAVG, Op.LDI, Op.SEND, Op.RECV})

# Fields that only make sense in [1, 32].
_BIW_FIELDS = ("mbiw", "ibiw", "obiw")

_FIELD_NAMES = tuple(f.name for f in dc_fields(Instruction) if f.name != "op")


def _signed_fits(value: int, width: int) -> bool:
    return -(1 << (width - 1)) <= value < (1 << (width - 1))


def _unsigned_fits(value: int, width: int) -> bool:
    return 0 <= value < (1 << width)


def encode(instr: Instruction, mode: EncodingMode = EncodingMode.WORD64) -> int:
    """Pack an instruction into a word of the given mode.

    Raises FieldOverflow, EvenRegisterRequired or OffsetUnsupportedIn32BitMode
    if the instruction cannot be represented.
    """
    op = Op(instr.op)
    table = _TABLES[mode][op]
    mn = op.mnemonic

    for field in EVEN_REGS.get(op, ()):
        if getattr(instr, field) % 2 != 0:
            raise EvenRegisterRequired(mn, field)

    if mode == EncodingMode.WORD32 and (instr.sel != 0 or instr.offset_value != 0):
        raise OffsetUnsupportedIn32BitMode(mn)

    encoded = {"op"}
    word = op.value << _OPCODE_LSB[mode]
    for name, lsb, width, signed in table:
        value = getattr(instr, name)
        fits = _signed_fits if signed else _unsigned_fits
        if not fits(value, width):
            raise FieldOverflow(name, value, width)
        word |= (value & ((1 << width) - 1)) << lsb
        encoded.add(name)

    # A nonzero value in a field this opcode does not encode would be lost.
    for name in _FIELD_NAMES:
        if name not in encoded and getattr(instr, name) != 0:
            raise FieldOverflow(name, getattr(instr, name), 0)
    return word


def decode(word: int, mode: EncodingMode = EncodingMode.WORD64) -> Instruction:
    """Inverse of encode. Rejects unknown opcodes and nonzero reserved bits.

    Field values are extracted as-is; range rules beyond the bit widths are
    reported by validate(), not here.
    """
    if not 0 <= word < (1 << mode.value):
        raise FieldOverflow("word", word, mode.value)
    opbits = (word >> _OPCODE_LSB[mode]) & 0x3F
    try:
        op = Op(opbits)
    except ValueError:
        raise UnknownOpcode(opbits) from None

    used = 0x3F << _OPCODE_LSB[mode]
    kw = {}
    for name, lsb, width, signed in _TABLES[mode][op]:
        raw = (word >> lsb) & ((1 << width) - 1)
        if signed and raw >= (1 << (width - 1)):
            raw -= 1 << width
        kw[name] = raw
        used |= ((1 << width) - 1) << lsb
    if word & ~used:
        raise ReservedFieldNonzero(op.mnemonic, f"bits 0x{word & ~used:x}")
    return Instruction(op, **kw)


def validate(instr: Instruction, event_registers: int | None = None) -> list[IsaError]:
    """Check static invariants; returns violations instead of raising.

    Uses the 64-bit field widths as the canonical ranges. If event_registers
    is given, wait/sync event indices are checked against it.
    """
    out: list[IsaError] = []
    try:
        op = Op(instr.op)
    except ValueError:
        out.append(UnknownOpcode(int(instr.op)))
        return out
    table = ENC64[op]
    encoded = {"op"}
    for name, _, width, signed in table:
        value = getattr(instr, name)
        fits = _signed_fits if signed else _unsigned_fits
        if not fits(value, width):
            out.append(FieldOverflow(name, value, width))
        encoded.add(name)
    for name in _FIELD_NAMES:
        if name not in encoded and getattr(instr, name) != 0:
            out.append(FieldOverflow(name, getattr(instr, name), 0))
    for field in EVEN_REGS.get(op, ()):
        if getattr(instr, field) % 2 != 0:
            out.append(EvenRegisterRequired(op.mnemonic, field))
    for name in _BIW_FIELDS:
        if name in encoded and not 1 <= getattr(instr, name) <= 32:
            out.append(FieldOverflow(name, getattr(instr, name), 6))
    allowed = SEL_MASK.get(op, 0)
    if instr.sel & ~allowed:
        out.append(FieldOverflow("sel", instr.sel, allowed.bit_count()))
    if event_registers is not None and op in (Op.WAIT, Op.SYNC):
        if instr.imm_ev >= event_registers:
            out.append(FieldOverflow("imm_ev", instr.imm_ev, event_registers))
    return out


# Binary program stream: magic, version, mode, reserved, count, then words.
STREAM_MAGIC = b"PIMI"
STREAM_VERSION = 1


class StreamError(IsaError):
    pass


def write_stream(instructions, mode: EncodingMode = EncodingMode.WORD64) -> bytes:
    """Serialize instructions to the little-endian "PIMI" container."""
    mode_byte = 0 if mode == EncodingMode.WORD64 else 1
    out = bytearray(STREAM_MAGIC)
    out += struct.pack("<BBHI", STREAM_VERSION, mode_byte, 0, len(instructions))
    fmt = "<Q" if mode == EncodingMode.WORD64 else "<I"
    for instr in instructions:
        out += struct.pack(fmt, encode(instr, mode))
    return bytes(out)


def read_stream(data: bytes) -> tuple[list[Instruction], EncodingMode]:
    """Parse a "PIMI" container back into instructions."""
    if len(data) < 12 or data[:4] != STREAM_MAGIC:
        raise StreamError("not a PIMI instruction stream")
    version, mode_byte, reserved, count = struct.unpack("<BBHI", data[4:12])
    if version != STREAM_VERSION:
        raise StreamError(f"unsupported stream version {version}")
    if mode_byte not in (0, 1):
        raise StreamError(f"bad mode byte {mode_byte}")
    if reserved != 0:
        raise StreamError("reserved header bytes must be zero")
    mode = EncodingMode.WORD64 if mode_byte == 0 else EncodingMode.WORD32
    wb = mode.word_bytes
    if len(data) != 12 + count * wb:
        raise StreamError(f"stream length {len(data)} does not match count {count}")
    fmt = "<Q" if wb == 8 else "<I"
    instrs = []
    for i in range(count):
        (word,) = struct.unpack_from(fmt, data, 12 + i * wb)
        instrs.append(decode(word, mode))
    return instrs, mode
