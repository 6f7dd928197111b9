"""Command-line driver. Exit codes: 0 ok, 1 user error, 2 trap/divergence."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import asm, lower, selftest
from .isa import EncodingMode, StreamError, read_stream
from .manifest import parse_bundle, serialize_bundle
from .oracle import diff_run
from .vm import FAULTS, Machine, StopReason

EX_OK, EX_USER, EX_TRAP = 0, 1, 2


def _seed_default() -> int:
    env = os.environ.get("PIMKIT_SEED")
    return int(env, 0) if env else selftest.DEFAULT_SEED


def _mode(flag: str) -> EncodingMode:
    return EncodingMode.WORD64 if flag == "64" else EncodingMode.WORD32


def _load_bundle(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        print(f"cannot read {path}: {e}", file=sys.stderr)
        return None
    result = parse_bundle(data, base_dir=Path(path).parent)
    if isinstance(result, list):
        for err in result:
            print(f"{path}: {err.path}: {err.message}", file=sys.stderr)
        return None
    return result


def cmd_asm(args) -> int:
    try:
        text = Path(args.input).read_bytes()
    except OSError as e:
        print(f"cannot read {args.input}: {e}", file=sys.stderr)
        return EX_USER
    result = asm.assemble(text)
    if isinstance(result, list):
        for d in result:
            print(f"{args.input}:{d}", file=sys.stderr)
        return EX_USER
    for w in result.warnings:
        print(f"{args.input}:{w}", file=sys.stderr)
    mode = _mode(args.mode)
    try:
        streams = asm.encode_program(result, mode)
    except Exception as e:
        print(f"{args.input}: not encodable in {args.mode}-bit mode: {e}",
              file=sys.stderr)
        return EX_USER
    out = Path(args.output)
    if len(streams) == 1:
        out.write_bytes(next(iter(streams.values())))
        print(f"wrote {out}")
    else:
        for cid, blob in sorted(streams.items()):
            p = out.with_suffix(f".core{cid}{out.suffix}")
            p.write_bytes(blob)
            print(f"wrote {p}")
    return EX_OK


def cmd_disasm(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except OSError as e:
        print(f"cannot read {args.input}: {e}", file=sys.stderr)
        return EX_USER
    try:
        instructions, _ = read_stream(data)
    except StreamError as e:
        print(f"{args.input}: {e}", file=sys.stderr)
        return EX_USER
    prog = asm.SourceProgram([asm.Section(args.core, instructions)])
    text = asm.disassemble(prog)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EX_OK


def cmd_run(args) -> int:
    bundle = _load_bundle(args.bundle)
    if bundle is None:
        return EX_USER
    trace_fh = open(args.trace, "w") if args.trace else None
    sink = (lambda ev: trace_fh.write(ev.format() + "\n")) if trace_fh else None
    m = Machine(bundle, strict_overlap=args.strict_overlap, trace_sink=sink,
                fault=args.fault)
    result = m.run(args.max_steps)
    if trace_fh:
        trace_fh.close()
    if args.stats:
        Path(args.stats).write_text(result.stats_json() + "\n")
    print(f"steps: {result.steps}")
    print(f"stop: {result.stop.value}")
    print(f"gmem fnv1a64: {m.digest():#018x}")
    if result.stop == StopReason.TRAPPED:
        trap = result.traps[0]
        print(json.dumps({"kind": trap.kind.value, "core": trap.core,
                          "pc": trap.pc, "detail": trap.detail}),
              file=sys.stderr)
        return EX_TRAP
    if result.stop == StopReason.STEP_LIMIT:
        print(json.dumps({"kind": "StepLimitExceeded",
                          "detail": f"max_steps={args.max_steps}"}),
              file=sys.stderr)
        return EX_TRAP
    return EX_OK


def cmd_gen_mlp(args) -> int:
    try:
        data = Path(args.spec).read_bytes()
    except OSError as e:
        print(f"cannot read {args.spec}: {e}", file=sys.stderr)
        return EX_USER
    try:
        spec = lower.MlpSpec.from_json(data)
        plan = lower.plan_mlp(spec)
    except (KeyError, ValueError, TypeError) as e:
        print(f"{args.spec}: {e}", file=sys.stderr)
        return EX_USER
    Path(args.output).write_bytes(serialize_bundle(plan.bundle))
    print(json.dumps({
        "bundle": args.output,
        "input_addr": plan.input_addr, "input_len": plan.input_len,
        "output_addr": plan.output_addr, "output_len": plan.output_len,
        "element_bytes": plan.ebytes, "element_bits": plan.biw,
    }, indent=1))
    return EX_OK


def cmd_diff(args) -> int:
    bundle = _load_bundle(args.bundle)
    if bundle is None:
        return EX_USER
    report = diff_run(bundle, max_steps=args.max_steps,
                      strict_overlap=args.strict_overlap, seed=args.seed,
                      fault=args.fault)
    print(report.to_json())
    return EX_TRAP if report.diverged else EX_OK


def cmd_selftest(args) -> int:
    results = selftest.run_all(scale=args.scale, seed=args.seed,
                               fault=args.divergence_fixture)
    failed = 0
    for r in results:
        print(r.line())
        failed += 0 if r.ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EX_TRAP if failed else EX_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pimkit",
                                description="PIM accelerator ISA toolchain")
    sub = p.add_subparsers(dest="cmd", required=True)

    a = sub.add_parser("asm", help="assemble .pasm text to a PIMI stream")
    a.add_argument("input")
    a.add_argument("-o", "--output", required=True)
    a.add_argument("--mode", choices=("64", "32"), default="64")
    a.set_defaults(fn=cmd_asm)

    d = sub.add_parser("disasm", help="disassemble a PIMI stream")
    d.add_argument("input")
    d.add_argument("-o", "--output")
    d.add_argument("--core", type=int, default=0,
                   help="core id for the emitted .core directive")
    d.set_defaults(fn=cmd_disasm)

    r = sub.add_parser("run", help="run a program bundle")
    r.add_argument("bundle")
    r.add_argument("--trace", help="write a tab-separated trace to this file")
    r.add_argument("--stats", help="write run statistics JSON to this file")
    r.add_argument("--max-steps", type=int, default=1_000_000)
    g = r.add_mutually_exclusive_group()
    g.add_argument("--strict-overlap", dest="strict_overlap",
                   action="store_true", default=True)
    g.add_argument("--permissive-overlap", dest="strict_overlap",
                   action="store_false")
    r.add_argument("--fault", choices=FAULTS, help=argparse.SUPPRESS)
    r.set_defaults(fn=cmd_run)

    m = sub.add_parser("gen-mlp", help="lower an MLP spec JSON to a bundle")
    m.add_argument("spec")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(fn=cmd_gen_mlp)

    f = sub.add_parser("diff", help="differential-run a bundle against the "
                                    "pure-Python reference")
    f.add_argument("bundle")
    f.add_argument("--max-steps", type=int, default=1_000_000)
    f.add_argument("--seed", type=lambda s: int(s, 0), default=_seed_default())
    g = f.add_mutually_exclusive_group()
    g.add_argument("--strict-overlap", dest="strict_overlap",
                   action="store_true", default=True)
    g.add_argument("--permissive-overlap", dest="strict_overlap",
                   action="store_false")
    f.add_argument("--fault", choices=FAULTS, help=argparse.SUPPRESS)
    f.set_defaults(fn=cmd_diff)

    s = sub.add_parser("selftest", help="run the embedded property suite")
    s.add_argument("--scale", type=float, default=0.05,
                   help="fraction of the full sample counts (default 0.05)")
    s.add_argument("--seed", type=lambda s: int(s, 0), default=_seed_default())
    s.add_argument("--divergence-fixture", choices=FAULTS,
                   help=argparse.SUPPRESS)
    s.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
