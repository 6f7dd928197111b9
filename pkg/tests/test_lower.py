import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pimkit.isa import Op
from pimkit.lower import (
    GMEM,
    SENDRECV,
    LayerTooLargeForLocalMemory,
    MlpSpec,
    WidthUnsupported,
    lower_mlp,
    plan_mlp,
    ref_mlp,
    split_layer_rows,
)
from pimkit.manifest import validate_bundle
from pimkit.vm import Machine, StopReason


def test_split_layer_rows_hand_example():
    assert split_layer_rows(8, 3) == [(0, 3), (3, 3), (6, 2)]
    assert split_layer_rows(4, 1) == [(0, 4)]
    assert split_layer_rows(3, 3) == [(0, 1), (1, 1), (2, 1)]
    with pytest.raises(ValueError):
        split_layer_rows(4, 0)
    with pytest.raises(ValueError):
        split_layer_rows(4, 5)


@given(st.integers(1, 64), st.integers(1, 64))
@settings(max_examples=200)
def test_split_layer_rows_properties(rows, parts):
    if parts > rows:
        with pytest.raises(ValueError):
            split_layer_rows(rows, parts)
        return
    ranges = split_layer_rows(rows, parts)
    assert len(ranges) == parts
    pos = 0
    for start, count in ranges:
        assert start == pos and count >= 1
        pos += count
    assert pos == rows
    counts = [c for _, c in ranges]
    assert max(counts) - min(counts) <= 1
    assert counts == sorted(counts, reverse=True)


def mk_spec(dims, acts=None, seed=0, **kw):
    rng = random.Random(seed)
    weights = [[[rng.randint(-4, 4) for _ in range(dims[i])]
                for _ in range(dims[i + 1])] for i in range(len(dims) - 1)]
    biases = [[rng.randint(-10, 10) for _ in range(dims[i + 1])]
              for i in range(len(dims) - 1)]
    return MlpSpec(layer_dims=list(dims), weights=weights, biases=biases,
                   activations=list(acts or [None] * (len(dims) - 1)), **kw)


def run_plan(plan, x):
    m = Machine(plan.bundle)
    mask = (1 << plan.biw) - 1
    packed = b"".join((v & mask).to_bytes(plan.ebytes, "little") for v in x)
    m.gmem[plan.input_addr:plan.input_addr + len(packed)] = \
        np.frombuffer(packed, np.uint8)
    res = m.run(200000)
    assert res.stop == StopReason.FINISHED, (res.stop, res.traps)
    raw = bytes(m.gmem[plan.output_addr:
                       plan.output_addr + plan.output_len * plan.ebytes])
    half = 1 << (plan.biw - 1)
    out = []
    for i in range(plan.output_len):
        v = int.from_bytes(raw[i * plan.ebytes:(i + 1) * plan.ebytes],
                           "little") & mask
        out.append(v - (mask + 1) if v >= half else v)
    return out


def test_mixed_widths_rejected():
    spec = mk_spec((4, 3, 2), widths=[(8, 8), (16, 16)])
    with pytest.raises(WidthUnsupported):
        plan_mlp(spec)
    spec = mk_spec((4, 3), widths=[(8, 16)])
    with pytest.raises(WidthUnsupported):
        plan_mlp(spec)
    spec = mk_spec((4, 3), widths=[(16, 16)])
    assert plan_mlp(spec).ebytes == 2


def test_layer_too_large_for_local_memory():
    with pytest.raises(LayerTooLargeForLocalMemory):
        plan_mlp(mk_spec((64, 64), local_mem_bytes=64))


def test_spec_check_errors():
    spec = mk_spec((4, 3))
    spec.weights[0] = spec.weights[0][:-1]          # 2x4 instead of 3x4
    with pytest.raises(ValueError):
        plan_mlp(spec)
    with pytest.raises(ValueError):
        plan_mlp(mk_spec((4, 3), acts=["softmax"]))
    with pytest.raises(ValueError):
        plan_mlp(mk_spec((4, 3), transport="carrier-pigeon"))
    with pytest.raises(ValueError):
        plan_mlp(mk_spec((4,)))
    with pytest.raises(ValueError):
        plan_mlp(mk_spec((4, 3, 2), core_assignment=[0, 2]))  # sparse ids
    with pytest.raises(ValueError):
        plan_mlp(mk_spec((4, 3, 2), core_assignment=[0]))


def ops_of(bundle, core=0):
    return [Op(i.op) for i in bundle.cores[core].code]


def test_relu_fuses_into_mvmul():
    b = lower_mlp(mk_spec((4, 3), acts=["relu"]))
    ops = ops_of(b)
    assert Op.VRELU not in ops
    mv = [i for i in b.cores[0].code if i.op == Op.MVMUL]
    assert len(mv) == 1 and mv[0].relu == 1
    # bias add comes after the matrix product
    assert ops.index(Op.MVMUL) < ops.index(Op.VVADD)


def test_sigmoid_tanh_emit_activation_ops():
    b = lower_mlp(mk_spec((4, 3, 2), acts=["tanh", "sigmoid"]))
    ops = ops_of(b)
    assert ops.count(Op.VTANH) == 1 and ops.count(Op.VSIGM) == 1
    assert ops.index(Op.VVADD) < ops.index(Op.VTANH)
    mv = [i for i in b.cores[0].code if i.op == Op.MVMUL]
    assert all(i.relu == 0 for i in mv)


def test_transport_choice_shapes_the_code():
    spec = mk_spec((4, 3, 2), core_assignment=[0, 1], transport=SENDRECV)
    b = lower_mlp(spec)
    all_ops = [Op(i.op) for c in b.cores for i in c.code]
    assert Op.SEND in all_ops and Op.RECV in all_ops
    assert Op.SYNC not in all_ops and Op.WAIT not in all_ops

    spec = mk_spec((4, 3, 2), core_assignment=[0, 1], transport=GMEM)
    b = lower_mlp(spec)
    all_ops = [Op(i.op) for c in b.cores for i in c.code]
    assert Op.SYNC in all_ops and Op.WAIT in all_ops
    assert Op.SEND not in all_ops and Op.RECV not in all_ops


def test_lowered_bundles_validate():
    for assign, transport in [(None, SENDRECV),
                              ([0, 1], SENDRECV),
                              ([[0, 1], 0], GMEM)]:
        spec = mk_spec((6, 5, 3), acts=["relu", None],
                       core_assignment=assign, transport=transport)
        assert validate_bundle(lower_mlp(spec)) == []


def test_plan_layout_is_aligned_and_disjoint():
    plan = plan_mlp(mk_spec((6, 5, 3), core_assignment=[[0, 1], 0]))
    assert plan.input_addr % 4 == 0 and plan.output_addr % 4 == 0
    for cid, layout in plan.layouts.items():
        addrs = list(layout.values())
        assert len(set(addrs)) == len(addrs)
        assert all(a % 4 == 0 for a in addrs)
    # biases ride in as global memory init data
    assert len(plan.bundle.global_mem_init) == 2


def test_from_json_defaults_and_fields():
    spec = mk_spec((3, 2), acts=["relu"])
    blob = json.dumps({
        "layer_dims": spec.layer_dims,
        "weights": spec.weights,
        "biases": spec.biases,
        "activations": ["relu"],
        "widths": [[8, 8]],
        "qformat": [6, 6],
    })
    got = MlpSpec.from_json(blob)
    assert got.layer_dims == spec.layer_dims
    assert got.widths == [(8, 8)] and got.qformat == (6, 6)
    assert got.transport == SENDRECV

    bare = MlpSpec.from_json(json.dumps({
        "layer_dims": [2, 1], "weights": [[[1, 1]]], "biases": [[0]]}))
    assert bare.activations == [None] and bare.widths is None


@pytest.mark.parametrize("assign,transport", [
    (None, SENDRECV),
    ([0, 0, 0], SENDRECV),
    ([0, 1, 0], SENDRECV),
    ([0, 1, 0], GMEM),
    ([[0, 1], 1, [0, 1, 2]], SENDRECV),
    ([[0, 1, 2], 0, 1], GMEM),
])
def test_end_to_end_matches_reference(assign, transport):
    spec = mk_spec((8, 6, 5, 4), acts=["relu", "tanh", None], seed=3,
                   core_assignment=assign, transport=transport)
    plan = plan_mlp(spec)
    rng = random.Random(11)
    for _ in range(20):
        x = [rng.randint(-30, 30) for _ in range(8)]
        assert run_plan(plan, x) == ref_mlp(spec, x)


def test_split_does_not_change_the_answer():
    flat = mk_spec((9, 7), acts=["relu"], seed=5)
    split = mk_spec((9, 7), acts=["relu"], seed=5,
                    core_assignment=[[0, 1, 2]])
    p1, p2 = plan_mlp(flat), plan_mlp(split)
    rng = random.Random(2)
    for _ in range(10):
        x = [rng.randint(-50, 50) for _ in range(9)]
        assert run_plan(p1, x) == run_plan(p2, x)


@given(st.lists(st.integers(-128, 127), min_size=4, max_size=4))
@settings(max_examples=50, deadline=None)
def test_identity_network_property(x):
    n = len(x)
    eye = [[1 if r == c else 0 for c in range(n)] for r in range(n)]
    spec = MlpSpec(layer_dims=[n, n], weights=[eye], biases=[[0] * n],
                   activations=[None])
    assert run_plan(plan_mlp(spec), x) == x
