import json
import subprocess
import sys

import pytest

from pimkit.cli import main
from pimkit.isa import EncodingMode, Instruction, Op, read_stream
from pimkit.manifest import CoreConfig, ProgramBundle, serialize_bundle
from pimkit.vm import Machine

PASM = """\
.core 0
    sldi $r1, 8
    ldi $r1, 0xab, 4, 0
    sldi $r8, 64
    sldi $r9, 0
    st $r8, $r1, 4
"""

MLP_SPEC = {
    "layer_dims": [4, 3],
    "weights": [[[1, 2, -1, 0], [0, 1, 1, -2], [3, -1, 0, 1]]],
    "biases": [[1, -2, 3]],
    "activations": ["relu"],
}


def write_bundle(path, code, gmem=4096):
    core = CoreConfig(core_id=0, code=code, local_mem_bytes=4096)
    b = ProgramBundle(mode=EncodingMode.WORD64, cores=[core],
                      global_mem_bytes=gmem)
    path.write_bytes(serialize_bundle(b))
    return b


def test_asm_disasm_roundtrip(tmp_path, capsys):
    src = tmp_path / "p.pasm"
    src.write_text(PASM)
    out = tmp_path / "p.bin"
    assert main(["asm", str(src), "-o", str(out)]) == 0
    assert "wrote" in capsys.readouterr().out
    instrs, mode = read_stream(out.read_bytes())
    assert mode == EncodingMode.WORD64 and len(instrs) == 5

    txt = tmp_path / "back.pasm"
    assert main(["disasm", str(out), "-o", str(txt)]) == 0
    again = tmp_path / "again.bin"
    assert main(["asm", str(txt), "-o", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_disasm_to_stdout(tmp_path, capsys):
    src = tmp_path / "p.pasm"
    src.write_text(PASM)
    out = tmp_path / "p.bin"
    main(["asm", str(src), "-o", str(out)])
    capsys.readouterr()
    assert main(["disasm", str(out), "--core", "2"]) == 0
    text = capsys.readouterr().out
    assert text.startswith(".core 2")
    assert "sldi $r1, 8" in text


def test_asm_reports_diagnostics(tmp_path, capsys):
    src = tmp_path / "bad.pasm"
    src.write_text(".core 0\n  frobnicate $r1\n")
    assert main(["asm", str(src), "-o", str(tmp_path / "x.bin")]) == 1
    err = capsys.readouterr().err
    assert "frobnicate" in err and "bad.pasm" in err


def test_asm_multicore_one_stream_per_core(tmp_path, capsys):
    src = tmp_path / "m.pasm"
    src.write_text(".core 0\n sldi $r1, 1\n.core 1\n sldi $r1, 2\n")
    assert main(["asm", str(src), "-o", str(tmp_path / "m.bin")]) == 0
    assert (tmp_path / "m.core0.bin").exists()
    assert (tmp_path / "m.core1.bin").exists()


def test_mode32_rejects_offsets(tmp_path, capsys):
    src = tmp_path / "o.pasm"
    src.write_text(".core 0\n vvadd $r2, $r4, $r6, 4, [0b001:2]\n")
    assert main(["asm", str(src), "-o", str(tmp_path / "o.bin"),
                 "--mode", "32"]) == 1
    assert "32" in capsys.readouterr().err
    assert main(["asm", str(src), "-o", str(tmp_path / "o64.bin"),
                 "--mode", "64"]) == 0


def test_run_prints_steps_stop_digest(tmp_path, capsys):
    bundle = tmp_path / "b.json"
    write_bundle(bundle, [
        Instruction(Op.SLDI, rd=1, imm=0),
        Instruction(Op.LDI, rd=1, imm8=0x7F, imm_size=8),
        Instruction(Op.SLDI, rd=8, imm=100),
        Instruction(Op.SLDI, rd=9, imm=0),
        Instruction(Op.ST, rd=8, rs1=1, imm_size=8),
    ])
    trace = tmp_path / "t.tsv"
    stats = tmp_path / "s.json"
    rc = main(["run", str(bundle), "--trace", str(trace),
               "--stats", str(stats)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "steps: 5" in out and "stop: finished" in out
    assert "gmem fnv1a64: 0x" in out

    lines = trace.read_text().strip().split("\n")
    assert len(lines) == 5 and all("\t" in ln for ln in lines)
    st = json.loads(stats.read_text())
    assert st["per_opcode"]["sldi"] == 3 and st["stop"] == "finished"


def test_run_deadlock_exits_2_with_trap_json(tmp_path, capsys):
    bundle = tmp_path / "dead.json"
    write_bundle(bundle, [Instruction(Op.WAIT, imm_ev=0, imm_val=1)])
    assert main(["run", str(bundle)]) == 2
    cap = capsys.readouterr()
    assert "stop: trapped" in cap.out
    trap = json.loads(cap.err.strip().split("\n")[-1])
    assert trap["kind"] == "Deadlock" and trap["core"] == 0


def test_run_step_limit_exits_2(tmp_path, capsys):
    bundle = tmp_path / "b.json"
    write_bundle(bundle, [Instruction(Op.SLDI, rd=1, imm=i) for i in range(4)])
    assert main(["run", str(bundle), "--max-steps", "1"]) == 2
    cap = capsys.readouterr()
    assert json.loads(cap.err.strip())["kind"] == "StepLimitExceeded"


def test_run_rejects_invalid_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "format": "pimbundle", "mode": 64,
        "cores": [{"core_id": 0, "code": ["sldi $r1"]}],
    }))
    assert main(["run", str(bad)]) == 1
    assert "$.cores[0].code[0]" in capsys.readouterr().err


def test_gen_mlp_run_diff_pipeline(tmp_path, capsys):
    spec = tmp_path / "net.json"
    spec.write_text(json.dumps(MLP_SPEC))
    bundle = tmp_path / "net.bundle.json"
    assert main(["gen-mlp", str(spec), "-o", str(bundle)]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["input_len"] == 4 and plan["output_len"] == 3
    assert plan["element_bits"] == 8

    assert main(["run", str(bundle)]) == 0
    assert "stop: finished" in capsys.readouterr().out

    assert main(["diff", str(bundle), "--seed", "7"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["diverged"] is False and rep["seed"] == 7


def test_gen_mlp_rejects_bad_spec(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"layer_dims": [4]}))
    assert main(["gen-mlp", str(spec), "-o", str(tmp_path / "x.json")]) == 1
    assert capsys.readouterr().err


def test_identity_mlp_digest_matches_in_process(tmp_path, capsys):
    spec = tmp_path / "id.json"
    n = 4
    spec.write_text(json.dumps({
        "layer_dims": [n, n],
        "weights": [[[1 if r == c else 0 for c in range(n)]
                     for r in range(n)]],
        "biases": [[0] * n],
        "activations": [None],
    }))
    bundle = tmp_path / "id.bundle.json"
    assert main(["gen-mlp", str(spec), "-o", str(bundle)]) == 0
    capsys.readouterr()
    assert main(["run", str(bundle)]) == 0
    digest_line = [ln for ln in capsys.readouterr().out.splitlines()
                   if "fnv1a64" in ln][0]

    from pimkit.manifest import parse_bundle
    m = Machine(parse_bundle(bundle.read_bytes()))
    m.run()
    assert digest_line.endswith(f"{m.digest():#018x}")


def test_diff_fault_flag_reports_divergence(tmp_path, capsys):
    spec = tmp_path / "net.json"
    spec.write_text(json.dumps(MLP_SPEC))
    bundle = tmp_path / "net.bundle.json"
    main(["gen-mlp", str(spec), "-o", str(bundle)])
    capsys.readouterr()
    assert main(["diff", str(bundle), "--fault", "vvadd-off-by-one"]) == 2
    rep = json.loads(capsys.readouterr().out)
    assert rep["diverged"] is True and rep["field"]


def test_selftest_scaled_passes(capsys):
    assert main(["selftest", "--scale", "0.01"]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert "FAIL" not in out


def test_selftest_divergence_fixture_fails(capsys):
    rc = main(["selftest", "--scale", "0.01",
               "--divergence-fixture", "mvmul-no-relu"])
    assert rc == 2
    out = capsys.readouterr().out
    assert "divergence-fixture" in out and "FAIL" in out


def test_seed_env_var_sets_default(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PIMKIT_SEED", "0x123")
    spec = tmp_path / "net.json"
    spec.write_text(json.dumps(MLP_SPEC))
    bundle = tmp_path / "net.bundle.json"
    main(["gen-mlp", str(spec), "-o", str(bundle)])
    capsys.readouterr()
    assert main(["diff", str(bundle)]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 0x123


def test_module_entry_point(tmp_path):
    src = tmp_path / "p.pasm"
    src.write_text(PASM)
    out = tmp_path / "p.bin"
    proc = subprocess.run(
        [sys.executable, "-m", "pimkit", "asm", str(src), "-o", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
    proc = subprocess.run([sys.executable, "-m", "pimkit", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("asm", "disasm", "run", "gen-mlp", "diff", "selftest"):
        assert sub in proc.stdout
