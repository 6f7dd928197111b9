import pytest

from pimkit.isa import EncodingMode, EvenRegisterRequired, Instruction, Op
from pimkit.manifest import ArrayGroup, CoreConfig, LogicalArray, ProgramBundle
from pimkit.vm import (
    Machine,
    StopReason,
    Trap,
    TrapKind,
    effective_address,
    load,
)

I = Instruction


def bundle(*core_codes, arrays=None, groups=None, gmem=4096, gmem_init=(),
           qformat=None):
    cores = []
    for cid, code in enumerate(core_codes):
        cores.append(CoreConfig(core_id=cid, code=list(code),
                                arrays=list(arrays or []),
                                groups=list(groups or [])))
    return ProgramBundle(mode=EncodingMode.WORD64, cores=cores,
                         global_mem_bytes=gmem,
                         global_mem_init=list(gmem_init),
                         activation_qformat=qformat)


def run(code, **kw):
    m = Machine(bundle(code), **kw)
    res = m.run()
    return m, res


def lmem(m, start, n, core=0):
    return bytes(m.cores[core].lmem[start:start + n])


def poke(code, data, at=0):
    """Prefix code with sldi/ldi pairs that write data bytes at lmem[at]."""
    out = []
    for i, b in enumerate(data):
        out.append(I(Op.SLDI, rd=31, imm=at + i))
        out.append(I(Op.LDI, rd=31, imm8=b, imm_size=1))
    return out + list(code)


def test_scalar_ops_wrap_u32():
    m, res = run([
        I(Op.SLDI, rd=1, imm=-1),
        I(Op.SLDI, rd=2, imm=2),
        I(Op.SADD, rd=3, rs1=1, rs2=2),
        I(Op.SSUB, rd=4, rs1=2, rs2=1),
        I(Op.SMUL, rd=5, rs1=1, rs2=2),
        I(Op.SADDI, rd=6, rs1=1, imm=-5),
        I(Op.SMULI, rd=7, rs1=2, imm=-3),
    ])
    assert res.stop == StopReason.FINISHED
    r = m.cores[0].regs
    assert r[1] == 0xFFFFFFFF
    assert r[3] == 1          # carry out is dropped
    assert r[4] == 3          # 2 - (2^32-1) wraps
    assert r[5] == 0xFFFFFFFE
    assert r[6] == 0xFFFFFFFA
    assert r[7] == (2 * -3) & 0xFFFFFFFF


def test_sld_uses_register_pair_and_offset():
    init = [(16, b"\x78\x56\x34\x12"), (20, b"\x99\x00\x00\x00")]
    m = Machine(bundle([
        I(Op.SLDI, rd=8, imm=16),
        I(Op.SLDI, rd=9, imm=0),
        I(Op.SLD, rd=1, rs1=8),
        I(Op.SLD, rd=2, rs1=8, offset_value=4),
    ], gmem_init=init))
    res = m.run()
    assert res.stop == StopReason.FINISHED
    assert m.cores[0].regs[1] == 0x12345678
    assert m.cores[0].regs[2] == 0x99

    # a nonzero high half must participate in the address
    m2, res2 = run([
        I(Op.SLDI, rd=8, imm=16),
        I(Op.SLDI, rd=9, imm=1),
        I(Op.SLD, rd=1, rs1=8),
    ])
    assert res2.traps[0].kind == TrapKind.OUT_OF_BOUNDS_GLOBAL

    with pytest.raises(EvenRegisterRequired):
        Machine(bundle([I(Op.SLD, rd=1, rs1=3)])).run()


def test_ten_bit_elements_live_in_two_bytes():
    """Cells are ceil(biw/8) bytes; reads mask to biw then sign-extend."""
    # 0x3FD is -3 in 10 bits; 0xFFFD has junk in the dead upper bits
    data = b"\xfd\x03" + b"\xf4\x01" + b"\xfd\xff"
    code = poke([
        I(Op.SETBW, ibiw=10, obiw=10),
        I(Op.SLDI, rd=4, imm=16),
        I(Op.SLDI, rd=5, imm=0),
        I(Op.VRELU, rd=4, rs1=5, imm_len=3),
    ], data)
    m, res = run(code)
    assert res.stop == StopReason.FINISHED
    # relu(-3)=0, relu(500)=500, relu(-3 with junk)=0
    assert lmem(m, 16, 6) == b"\x00\x00\xf4\x01\x00\x00"


def test_elementwise_width_rules():
    # vvadd stays at the input width, vmul widens to the output width
    data = bytes([100, 50])
    code = poke([
        I(Op.SETBW, ibiw=8, obiw=16),
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=1),
        I(Op.SLDI, rd=3, imm=8),
        I(Op.VVADD, rd=3, rs1=1, rs2=2, imm_len=1),
        I(Op.SLDI, rd=3, imm=12),
        I(Op.VMUL, rd=3, rs1=1, rs2=2, imm_len=1),
    ], data)
    m, res = run(code)
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 8, 1) == bytes([150 & 0xFF])      # wraps in 8 bits
    assert lmem(m, 12, 2) == (5000).to_bytes(2, "little")


def test_shift_semantics():
    data = bytes([33, 35])
    code = [
        I(Op.SETBW, ibiw=8, obiw=32),
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=1),
        I(Op.SLDI, rd=3, imm=8),
        I(Op.VVSLL, rd=3, rs1=1, rs2=2, imm_len=1),
    ]
    m, res = run(poke(code, data))
    assert res.stop == StopReason.FINISHED
    # 33 << 35 keeps nothing in 32 bits; a clamp to 31 would leave bit 31
    assert lmem(m, 8, 4) == b"\x00\x00\x00\x00"

    m2 = Machine(bundle(poke(code, data)), fault="shift-clamp-31")
    m2.run()
    assert lmem(m2, 8, 4) == b"\x00\x00\x00\x80"

    neg = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=1),
        I(Op.SLDI, rd=3, imm=8),
        I(Op.VVSRA, rd=3, rs1=1, rs2=2, imm_len=1),
    ], bytes([8, 0xFF]))
    m3, res3 = run(neg)
    assert res3.traps[0].kind == TrapKind.NEGATIVE_SHIFT


def test_vavg_truncates_toward_zero():
    def avg(vals, stride=1, n=None):
        data = b"".join((v & 0xFF).to_bytes(1, "little") for v in vals)
        code = poke([
            I(Op.SLDI, rd=1, imm=0),
            I(Op.SLDI, rd=2, imm=stride),
            I(Op.SLDI, rd=3, imm=32),
            I(Op.VAVG, rd=3, rs1=1, rs2=2, imm_len=n or len(vals)),
        ], data)
        m, res = run(code)
        if res.traps:
            return res.traps[0]
        return int.from_bytes(lmem(m, 32, 1), "little", signed=True)

    assert avg([5, 6]) == 5
    assert avg([-5, -6]) == -5          # not floor(-5.5) = -6
    assert avg([7, 99, 9, 99], stride=2, n=2) == 8
    assert avg([1, 2], stride=0).kind == TrapKind.LENGTH_MISMATCH
    assert avg([1, 2], stride=-1).kind == TrapKind.LENGTH_MISMATCH


def test_vdmul_scalar_result():
    data = bytes([3, (-4) & 0xFF, 10, 2])
    code = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=2),
        I(Op.SLDI, rd=3, imm=16),
        I(Op.VDMUL, rd=3, rs1=1, rs2=2, imm_len=2),
    ], data)
    m, res = run(code)
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 16, 1) == bytes([(3 * 10 + -4 * 2) & 0xFF])


def test_vmv_stride_and_overlap():
    data = bytes([1, 2, 3, 4])
    gather = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=2),
        I(Op.SLDI, rd=3, imm=16),
        I(Op.VMV, rd=3, rs1=1, rs2=2, imm_len=2),
    ], data)
    m, res = run(gather)
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 16, 2) == bytes([1, 3])

    overlapping = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=1),
        I(Op.SLDI, rd=3, imm=2),
        I(Op.VMV, rd=3, rs1=1, rs2=2, imm_len=4),
    ], data)
    m2, res2 = run(overlapping)
    assert res2.traps[0].kind == TrapKind.OVERLAP_UNDEFINED
    m3, res3 = run(overlapping, strict_overlap=False)
    assert res3.stop == StopReason.FINISHED
    # all sources are read before anything is written
    assert lmem(m3, 0, 6) == bytes([1, 2, 1, 2, 3, 4])


def test_vrsu_vrsl_clamp_and_reencode():
    data = bytes([5, 100, (-7) & 0xFF])
    up = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=50),
        I(Op.SLDI, rd=3, imm=16),
        I(Op.VRSU, rd=3, rs1=1, rs2=2, imm_len=3),
    ], data)
    m, _ = run(up)
    assert lmem(m, 16, 3) == bytes([5, 50, (-7) & 0xFF])

    low = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=-5),
        I(Op.SLDI, rd=3, imm=16),
        I(Op.VRSL, rd=3, rs1=1, rs2=2, imm_len=3),
    ], data)
    m2, _ = run(low)
    assert lmem(m2, 16, 3) == bytes([5, 100, (-5) & 0xFF])

    # narrowing in place walks elements in ascending order
    narrow = poke([
        I(Op.SETBW, ibiw=16, obiw=8),
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=127),
        I(Op.SLDI, rd=3, imm=0),
        I(Op.VRSU, rd=3, rs1=1, rs2=2, imm_len=2),
    ], b"\x2c\x01\xd4\xfe")  # [300, -300]
    m3, res3 = run(narrow)
    assert res3.stop == StopReason.FINISHED
    assert lmem(m3, 0, 2) == bytes([127, (-300) & 0xFF])

    # widening may not overlap: each write would clobber an unread source
    widen = poke([
        I(Op.SETBW, ibiw=8, obiw=16),
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=127),
        I(Op.SLDI, rd=3, imm=1),
        I(Op.VRSU, rd=3, rs1=1, rs2=2, imm_len=3),
    ], data)
    _, res4 = run(widen)
    assert res4.traps[0].kind == TrapKind.OVERLAP_UNDEFINED


def mat_bundle(code, weights, lmem_init=b"", cols=None):
    rows = len(weights)
    cols = cols if cols is not None else len(weights[0])
    arr = LogicalArray(0, rows, cols, [list(r) for r in weights])
    grp = ArrayGroup(0, [(0, 0, 0)], rows, cols)
    return bundle(poke(code, lmem_init), arrays=[arr], groups=[grp])


def test_mvmul_relu_saturation_group():
    w = [[2, -3], [1, 4]]
    code = [
        I(Op.SLDI, rd=2, imm=0),
        I(Op.SLDI, rd=4, imm=16),
        I(Op.MVMUL, rd=4, rs1=2, mbiw=8, relu=1, imm_group=0),
    ]
    m = Machine(mat_bundle(code, w, bytes([10, 20])))
    m.run()
    # y = [20-60, 10+80], relu zeroes the first
    assert lmem(m, 16, 2) == bytes([0, 90])

    m2 = Machine(mat_bundle(code, w, bytes([100, 100])))
    m2.run()
    assert lmem(m2, 16, 2) == bytes([0, 127])   # 500 saturates at obiw 8

    no_relu = [c if c.op != Op.MVMUL else c.replace(relu=0) for c in code]
    m3 = Machine(mat_bundle(no_relu, w, bytes([10, 20])))
    m3.run()
    assert lmem(m3, 16, 2) == bytes([(-40) & 0xFF, 90])

    bad = [c if c.op != Op.MVMUL else c.replace(imm_group=5) for c in code]
    res = Machine(mat_bundle(bad, w, bytes([10, 20]))).run()
    assert res.traps[0].kind == TrapKind.UNKNOWN_GROUP


def test_mvmul_wide_accumulator_is_exact():
    """Row dots near 2^63 must not wrap before saturation."""
    big = (1 << 31) - 1
    w = [[big, big, big]]
    x = big.to_bytes(4, "little") * 3
    code = [
        I(Op.SETBW, ibiw=32, obiw=32),
        I(Op.SLDI, rd=2, imm=0),
        I(Op.SLDI, rd=4, imm=16),
        I(Op.MVMUL, rd=4, rs1=2, mbiw=32, relu=0, imm_group=0),
    ]
    m = Machine(mat_bundle(code, w, x))
    res = m.run()
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 16, 4) == big.to_bytes(4, "little")


def test_ld_st_ldi_lmv():
    m = Machine(bundle([
        I(Op.SLDI, rd=1, imm=8),
        I(Op.LDI, rd=1, imm8=0xAB, imm_size=4),
        I(Op.SLDI, rd=8, imm=100),   # gmem pair in r8:r9
        I(Op.SLDI, rd=9, imm=0),
        I(Op.ST, rd=8, rs1=1, imm_size=4),
        I(Op.SLDI, rd=2, imm=32),
        I(Op.LD, rd=2, rs1=8, imm_size=4),
        I(Op.SLDI, rd=3, imm=33),
        I(Op.LMV, rd=3, rs1=2, imm_size=2),
    ], gmem=256), strict_overlap=False)
    res = m.run()
    assert res.stop == StopReason.FINISHED
    assert bytes(m.gmem[100:104]) == b"\xab" * 4
    assert lmem(m, 32, 4) == b"\xab" * 4
    assert lmem(m, 33, 2) == b"\xab" * 2


def test_mem_bounds_and_lmv_overlap():
    _, res = run([I(Op.SLDI, rd=1, imm=1000000),
                  I(Op.LDI, rd=1, imm8=1, imm_size=1)])
    assert res.traps[0].kind == TrapKind.OUT_OF_BOUNDS_LOCAL

    _, res = run([I(Op.SLDI, rd=8, imm=100000000),
                  I(Op.SLDI, rd=9, imm=0),
                  I(Op.SLDI, rd=1, imm=0),
                  I(Op.LD, rd=1, rs1=8, imm_size=4)])
    assert res.traps[0].kind == TrapKind.OUT_OF_BOUNDS_GLOBAL

    over = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=3, imm=2),
        I(Op.LMV, rd=3, rs1=1, imm_size=4),
    ], bytes([1, 2, 3, 4]))
    _, res = run(over)
    assert res.traps[0].kind == TrapKind.OVERLAP_UNDEFINED
    m, res = run(over, strict_overlap=False)
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 0, 6) == bytes([1, 2, 1, 2, 3, 4])


def test_select_bits_pick_slots():
    data = bytes([1, 2, 3, 4, 10, 20, 30, 40])
    code = poke([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=4),
        I(Op.SLDI, rd=3, imm=16),
        # rs1 bit only: a comes from lmem[2:], b stays at lmem[4:]
        I(Op.VVADD, rd=3, rs1=1, rs2=2, imm_len=2, sel=0b010, offset_value=2),
    ], data)
    m, _ = run(code)
    assert lmem(m, 16, 2) == bytes([3 + 10, 4 + 20])

    code = poke([
        I(Op.SETBW, ibiw=8, obiw=16),
        I(Op.SLDI, rd=1, imm=0),
        I(Op.SLDI, rd=2, imm=4),
        I(Op.SLDI, rd=3, imm=16),
        # rd bit scales by the output element size (2 bytes here)
        I(Op.VMUL, rd=3, rs1=1, rs2=2, imm_len=1, sel=0b001, offset_value=3),
    ], data)
    m, _ = run(code)
    assert lmem(m, 16 + 6, 2) == (10).to_bytes(2, "little")


def test_effective_address_units():
    assert effective_address(100, 0b010, 3, "rs1", 2) == 106
    assert effective_address(100, 0b010, 3, "rs2", 2) == 100
    assert effective_address(100, 0b100, 3, "rs2", 2) == 106
    assert effective_address(100, 0b001, 3, "rd", 4) == 112
    assert effective_address(100, 0, 3, "rd", 4) == 100


def test_sync_and_wait_roundtrip():
    m, res = run([
        I(Op.SYNC, imm_core=0, imm_ev=2),
        I(Op.SYNC, imm_core=0, imm_ev=2),
        I(Op.WAIT, imm_ev=2, imm_val=2),
        I(Op.SLDI, rd=1, imm=7),
    ])
    assert res.stop == StopReason.FINISHED
    assert m.cores[0].regs[1] == 7
    assert m.cores[0].events[2] == 0    # wait consumed the count

    _, res = run([I(Op.WAIT, imm_ev=0, imm_val=1)])
    assert res.traps[0].kind == TrapKind.DEADLOCK

    _, res = run([I(Op.SYNC, imm_core=0, imm_ev=99)])
    assert res.traps[0].kind == TrapKind.INVALID_FOR_HARDWARE
    _, res = run([I(Op.SYNC, imm_core=3, imm_ev=0)])
    assert res.traps[0].kind == TrapKind.INVALID_FOR_HARDWARE


def test_rendezvous_moves_bytes_and_traces_both_sides():
    tx = [
        I(Op.SLDI, rd=1, imm=0),
        I(Op.LDI, rd=1, imm8=0x5A, imm_size=4),
        I(Op.SEND, rs1=1, imm_core=1, imm_size=4),
    ]
    rx = [
        I(Op.SLDI, rd=2, imm=64),
        I(Op.RECV, rd=2, imm_core=0, imm_size=4),
    ]
    events = []
    m = Machine(bundle(tx, rx), trace_sink=events.append)
    res = m.run()
    assert res.stop == StopReason.FINISHED
    assert lmem(m, 64, 4, core=1) == b"\x5a" * 4
    assert res.bytes_sent == 4
    assert res.pair_bytes == {(0, 1): 4}

    pair = [e for e in events if e.core in (0, 1) and
            ("msg" in e.text or e.effects[0][0] in ("msg", "lmem"))][-2:]
    send_ev, recv_ev = pair
    assert send_ev.core == 0 and send_ev.effects[0][0] == "msg"
    assert recv_ev.core == 1 and recv_ev.effects[0][0] == "lmem"
    assert send_ev.step == recv_ev.step   # one scheduler step, two records

    bad_rx = [rx[0], rx[1].replace(imm_size=8)]
    res = Machine(bundle(tx, bad_rx)).run()
    assert res.traps[0].kind == TrapKind.SIZE_MISMATCH_SEND_RECV

    res = Machine(bundle([I(Op.RECV, rd=2, imm_core=1, imm_size=4)],
                         [I(Op.SLDI, rd=1, imm=0)])).run()
    assert res.traps[0].kind == TrapKind.DEADLOCK


def test_scheduler_is_round_robin():
    events = []
    m = Machine(bundle(
        [I(Op.SLDI, rd=1, imm=0), I(Op.SLDI, rd=1, imm=1)],
        [I(Op.SLDI, rd=1, imm=2), I(Op.SLDI, rd=1, imm=3)],
    ), trace_sink=events.append)
    res = m.run()
    assert res.stop == StopReason.FINISHED
    assert [e.core for e in events] == [0, 1, 0, 1]
    assert [e.step for e in events] == [1, 2, 3, 4]
    assert res.per_core == [2, 2]


def test_trap_precedence_spot_checks():
    # zero length loses to nothing: addresses are never inspected
    _, res = run([I(Op.SLDI, rd=1, imm=10**6),
                  I(Op.VVADD, rd=1, rs1=1, rs2=1, imm_len=0)])
    assert res.traps[0].kind == TrapKind.LENGTH_MISMATCH

    # unknown group is reported before any operand is touched
    _, res = run([I(Op.SLDI, rd=1, imm=10**6),
                  I(Op.MVMUL, rd=1, rs1=1, mbiw=8, imm_group=0)])
    assert res.traps[0].kind == TrapKind.UNKNOWN_GROUP

    # the rs1 read is checked before the destination write
    code = poke([
        I(Op.SLDI, rd=1, imm=1000000),
        I(Op.SLDI, rd=2, imm=0),
        I(Op.SLDI, rd=3, imm=1000000),
        I(Op.VVADD, rd=3, rs1=1, rs2=2, imm_len=1),
    ], bytes([1]))
    _, res = run(code)
    assert res.traps[0].kind == TrapKind.OUT_OF_BOUNDS_LOCAL
    assert "1000000" in res.traps[0].detail


def test_digest_matches_reference_fnv1a():
    m, res = run([
        I(Op.SLDI, rd=1, imm=0),
        I(Op.LDI, rd=1, imm8=0xC3, imm_size=8),
        I(Op.SLDI, rd=8, imm=40),
        I(Op.SLDI, rd=9, imm=0),
        I(Op.ST, rd=8, rs1=1, imm_size=8),
    ])
    assert res.stop == StopReason.FINISHED
    acc = 0xCBF29CE484222325
    for b in bytes(m.gmem):
        acc = ((acc ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    assert m.digest() == acc


def test_run_result_stats_and_step_limit():
    code = [I(Op.SLDI, rd=1, imm=i) for i in range(5)]
    m = Machine(bundle(code))
    res = m.run()
    assert res.steps == 5
    assert res.per_opcode == {"sldi": 5}
    import json
    stats = json.loads(res.stats_json())
    assert stats["stop"] == "finished" and stats["steps"] == 5

    res = Machine(bundle(code)).run(max_steps=2)
    assert res.stop == StopReason.STEP_LIMIT and res.steps == 2


def test_setbw_guards():
    b = bundle([I(Op.SETBW, ibiw=8, obiw=16)])
    b.variable_bitwidth_supported = False
    res = Machine(b).run()
    assert res.traps[0].kind == TrapKind.INVALID_FOR_HARDWARE

    _, res = run([I(Op.SETBW, ibiw=0, obiw=8)])
    assert res.traps[0].kind == TrapKind.INVALID_FOR_HARDWARE


def test_load_helper():
    m = load(bundle([I(Op.SLDI, rd=1, imm=1)]), strict_overlap=False)
    assert isinstance(m, Machine) and m.strict_overlap is False
