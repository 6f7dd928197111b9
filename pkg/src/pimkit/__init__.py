"""pimkit: reference toolchain for a processing-in-memory DNN accelerator ISA.

Binary codec and assembler for the 31-instruction set, a deterministic
multi-core functional simulator, a pure-Python differential oracle, and a
small MLP-to-ISA lowering pass, all behind one CLI.
"""

from .isa import (
    EncodingMode,
    Instruction,
    Op,
    decode,
    encode,
    read_stream,
    validate,
    write_stream,
)
from .manifest import (
    ArrayGroup,
    CoreConfig,
    LogicalArray,
    ProgramBundle,
    parse_bundle,
    serialize_bundle,
    validate_bundle,
)
from .oracle import DiffReport, RefEnv, diff_run, ref_exec, ref_fc_layer
from .vm import Machine, RunResult, StopReason, Trap, TrapKind

__version__ = "0.1.0"

__all__ = [
    "ArrayGroup",
    "CoreConfig",
    "DiffReport",
    "EncodingMode",
    "Instruction",
    "LogicalArray",
    "Machine",
    "Op",
    "ProgramBundle",
    "RefEnv",
    "RunResult",
    "StopReason",
    "Trap",
    "TrapKind",
    "decode",
    "diff_run",
    "encode",
    "parse_bundle",
    "read_stream",
    "ref_exec",
    "ref_fc_layer",
    "serialize_bundle",
    "validate",
    "validate_bundle",
    "write_stream",
    "__version__",
]
