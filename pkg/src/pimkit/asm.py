"""Assembly text format: parser and canonical printer.

Surface syntax (one instruction per line):

    .core 0                      # opens the instruction section for core 0
    sldi $r1, 42                 # registers are $r0..$r31
    vvadd $r1, $r2, $r3, 16, [0b011:8]   # trailing [select:value] offset
    ldi $r4, 0xAB, 64, 0         # immediates: decimal, 0x hex, 0b binary
    # comment to end of line

The `[select:value]` operand is optional on instructions that use the
register-select offset mechanism; omitting it means select=0, value=0.
Instructions whose offset is a plain byte/element offset (sld, vavg, ldi,
send, recv) take it as an ordinary numeric operand instead.

There are no labels and no branch mnemonics: programs are straight-line by
construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .isa import EncodingMode, Instruction, Op, validate


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class AsmDiagnostic:
    line: int
    column: int
    message: str
    severity: Severity = Severity.ERROR

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity.value}: {self.message}"


@dataclass
class Section:
    core_id: int
    instructions: list[Instruction]
    source_lines: list[int] = field(default_factory=list, compare=False)


@dataclass
class SourceProgram:
    sections: list[Section]
    warnings: list[AsmDiagnostic] = field(default_factory=list, compare=False)

    def core_ids(self) -> list[int]:
        return [s.core_id for s in self.sections]


# Operand descriptors, in assembly order. "off?" is the optional trailing
# [select:value]; "offb"/"offv" are plain byte/element offsets.
_R3 = ("rd", "rs1", "rs2")
OPERANDS: dict[Op, tuple[str, ...]] = {
    Op.SLDI: ("rd", "imm"),
    Op.SLD: ("rd", "rs1", "offb"),
    Op.SADD: _R3,
    Op.SSUB: _R3,
    Op.SMUL: _R3,
    Op.SADDI: ("rd", "rs1", "imm"),
    Op.SMULI: ("rd", "rs1", "imm"),
    Op.SETBW: ("ibiw", "obiw"),
    Op.MVMUL: ("rd", "rs1", "mbiw", "relu", "group"),
    Op.VVADD: _R3 + ("len", "off?"),
    Op.VSUB: _R3 + ("len", "off?"),
    Op.VMUL: _R3 + ("len", "off?"),
    Op.VDMUL: _R3 + ("len", "off?"),
    Op.VMAX: _R3 + ("len", "off?"),
    Op.VVSLL: _R3 + ("len", "off?"),
    Op.VVSRA: _R3 + ("len", "off?"),
    Op.VAVG: _R3 + ("len", "offv"),
    Op.VRELU: ("rd", "rs1", "len", "off?"),
    Op.VTANH: ("rd", "rs1", "len", "off?"),
    Op.VSIGM: ("rd", "rs1", "len", "off?"),
    Op.VMV: _R3 + ("len",),
    Op.VRSU: _R3 + ("len", "off?"),
    Op.VRSL: _R3 + ("len", "off?"),
    Op.LD: ("rd", "rs1", "size", "off?"),
    Op.ST: ("rd", "rs1", "size", "off?"),
    Op.LDI: ("rd", "imm8", "size", "offb"),
    Op.LMV: ("rd", "rs1", "size", "off?"),
    Op.SEND: ("rs1", "core", "size", "offb"),
    Op.RECV: ("rd", "core", "size", "offb"),
    Op.WAIT: ("ev", "val"),
    Op.SYNC: ("ev", "core"),
}

# operand tag -> Instruction field for plain integer operands
_INT_FIELDS = {
    "imm": "imm", "offb": "offset_value", "offv": "offset_value",
    "len": "imm_len", "size": "imm_size", "core": "imm_core",
    "ev": "imm_ev", "val": "imm_val", "group": "imm_group",
    "imm8": "imm8", "mbiw": "mbiw", "relu": "relu",
    "ibiw": "ibiw", "obiw": "obiw",
}

MNEMONICS = {op.mnemonic: op for op in Op}

_REG_RE = re.compile(r"^\$r(\d+)$")
# select mask is binary with 0b, or one decimal digit 0..7
_OFF_RE = re.compile(r"^\[(0b[01]{1,3}|[0-7]):(.+)\]$")


def _parse_int(tok: str) -> int | None:
    try:
        return int(tok, 0)
    except ValueError:
        return None


class _LineParser:
    def __init__(self, lineno: int, raw: str, diags: list[AsmDiagnostic]):
        self.lineno = lineno
        self.raw = raw
        self.diags = diags
        self.search_from = 0

    def col_of(self, tok: str) -> int:
        pos = self.raw.find(tok, self.search_from)
        if pos < 0:
            return 1
        self.search_from = pos + len(tok)
        return pos + 1

    def error(self, tok: str, message: str) -> None:
        self.diags.append(AsmDiagnostic(self.lineno, self.col_of(tok), message))

    def warn(self, tok: str, message: str) -> None:
        self.diags.append(
            AsmDiagnostic(self.lineno, self.col_of(tok), message, Severity.WARNING)
        )


def _parse_instruction(p: _LineParser, mnemonic: str, ops: list[str]) -> Instruction | None:
    op = MNEMONICS.get(mnemonic)
    if op is None:
        p.error(mnemonic, f"unknown mnemonic '{mnemonic}'")
        return None
    spec = OPERANDS[op]
    required = [t for t in spec if t != "off?"]
    has_opt = spec[-1:] == ("off?",)
    if len(ops) < len(required) or len(ops) > len(spec):
        want = f"{len(required)}" + (f" or {len(spec)}" if has_opt else "")
        p.error(mnemonic, f"{mnemonic} expects {want} operands, got {len(ops)}")
        return None

    kw: dict[str, int] = {}
    ok = True
    for tag, tok in zip(spec, ops):
        tok = tok.strip()
        if tag in ("rd", "rs1", "rs2"):
            m = _REG_RE.match(tok)
            if not m:
                p.error(tok, f"expected a register for {tag}, got '{tok}'")
                ok = False
                continue
            idx = int(m.group(1))
            if idx > 31:
                p.error(tok, f"register $r{idx} out of range (0..31)")
                ok = False
                continue
            kw[tag] = idx
        elif tag == "off?":
            m = _OFF_RE.match(tok)
            if not m:
                p.error(tok, f"expected offset operand [select:value], got '{tok}'")
                ok = False
                continue
            sel = int(m.group(1), 0) if m.group(1).startswith("0b") \
                else int(m.group(1))
            val = _parse_int(m.group(2))
            if val is None or val < 0:
                p.error(tok, f"bad offset value '{m.group(2)}'")
                ok = False
                continue
            if sel == 0 and val != 0:
                p.warn(tok, "offset value has no effect: no select bits set")
            kw["sel"] = sel
            kw["offset_value"] = val
        else:
            value = _parse_int(tok)
            if value is None:
                p.error(tok, f"expected an integer for {tag}, got '{tok}'")
                ok = False
                continue
            if tag == "imm8" and -128 <= value < 0:
                value &= 0xFF
            kw[_INT_FIELDS[tag]] = value
    if not ok:
        return None

    instr = Instruction(op, **kw)
    for violation in validate(instr):
        # phrase the even-register rule the way the ISA states it
        if violation.__class__.__name__ == "EvenRegisterRequired":
            p.error(mnemonic, f"{mnemonic}: {violation.field} must be an even register index")
        else:
            p.error(mnemonic, f"{mnemonic}: {violation}")
        ok = False
    return instr if ok else None


def assemble(text: str | bytes) -> SourceProgram | list[AsmDiagnostic]:
    """Parse assembly text into per-core sections.

    Returns a SourceProgram on success, otherwise the list of diagnostics
    (which then contains at least one error). Warnings ride along on the
    program's `warnings` attribute.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            return [AsmDiagnostic(1, 1, f"input is not valid UTF-8: {e}")]

    diags: list[AsmDiagnostic] = []
    sections: list[Section] = []
    current: Section | None = None
    seen_cores: set[int] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        p = _LineParser(lineno, raw, diags)

        if line.startswith("."):
            parts = line.split()
            if parts[0] != ".core":
                p.error(parts[0], f"unknown directive '{parts[0]}'")
                continue
            if len(parts) != 2 or (core_id := _parse_int(parts[1])) is None or core_id < 0:
                p.error(parts[0], ".core expects one unsigned core id")
                continue
            if core_id in seen_cores:
                p.error(parts[1], f"duplicate .core {core_id}")
                continue
            seen_cores.add(core_id)
            current = Section(core_id, [])
            sections.append(current)
            continue

        head = line.split(None, 1)
        mnemonic = head[0]
        ops = head[1].split(",") if len(head) > 1 else []
        if current is None:
            p.error(mnemonic, "instruction before any .core directive")
            continue
        instr = _parse_instruction(p, mnemonic, ops)
        if instr is not None:
            current.instructions.append(instr)
            current.source_lines.append(lineno)

    if any(d.severity == Severity.ERROR for d in diags):
        return diags
    return SourceProgram(sections, warnings=diags)


def format_instruction(instr: Instruction) -> str:
    """Canonical single-line text for one instruction."""
    op = Op(instr.op)
    parts = []
    for tag in OPERANDS[op]:
        if tag in ("rd", "rs1", "rs2"):
            parts.append(f"$r{getattr(instr, tag)}")
        elif tag == "off?":
            if instr.sel or instr.offset_value:
                parts.append(f"[0b{instr.sel:03b}:{instr.offset_value}]")
        else:
            parts.append(str(getattr(instr, _INT_FIELDS[tag])))
    return op.mnemonic + (" " + ", ".join(parts) if parts else "")


def disassemble(program: SourceProgram) -> str:
    """Print a program back to canonical assembly text.

    assemble(disassemble(p)) == p for valid programs, and the output is a
    fixed point of the round trip.
    """
    lines = []
    for section in program.sections:
        lines.append(f".core {section.core_id}")
        for instr in section.instructions:
            lines.append(format_instruction(instr))
    return "\n".join(lines) + ("\n" if lines else "")


def encode_program(program: SourceProgram, mode: EncodingMode) -> dict[int, bytes]:
    """Encode each section to a PIMI stream; returns {core_id: bytes}."""
    from .isa import write_stream

    return {s.core_id: write_stream(s.instructions, mode) for s in program.sections}
