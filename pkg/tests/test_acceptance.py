"""Full-scale run of every embedded check, one test per criterion.

`pimkit selftest --scale 1.0` is the command-line equivalent; here each
criterion gets its own pass/fail line and the stated time budget is
enforced where one exists.
"""

import pytest

from pimkit import selftest


@pytest.fixture(scope="session")
def results():
    out = selftest.run_all(scale=1.0)
    return {r.name: r for r in out}


def criterion(results, name):
    r = results[name]
    print(r.line())
    assert r.ok, r.detail
    if r.budget_s is not None:
        assert r.elapsed < r.budget_s, \
            f"{name} took {r.elapsed:.2f}s, budget {r.budget_s}s"


def test_codec_roundtrip(results):
    criterion(results, "codec-roundtrip")


def test_asm_roundtrip(results):
    criterion(results, "asm-roundtrip")


def test_opcode_differential(results):
    criterion(results, "opcode-differential")


def test_mlp_end_to_end(results):
    criterion(results, "mlp-end-to-end")


def test_split_invariance(results):
    criterion(results, "split-invariance")


def test_sync_semantics(results):
    criterion(results, "sync-semantics")


def test_determinism(results):
    criterion(results, "determinism")


def test_bitwidth_pipeline(results):
    criterion(results, "bitwidth-pipeline")


def test_saturation_edges(results):
    criterion(results, "saturation-edges")


def test_mutation_detect(results):
    criterion(results, "mutation-detect")
