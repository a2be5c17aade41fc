import random

import pytest

from oracles import csr_schedule
from secure_ntt.correction import Corrector
from secure_ntt.injector import FaultPlan, StuckMode
from secure_ntt.monitors import MonitorSet
from secure_ntt.ntt import KYBER, NttParams, ntt_behavioral
from secure_ntt.pipeline import PipelineError, SecureNtt, run, signal_counts
from secure_ntt.signals import (
    ALL,
    RD_EN,
    ControlSignalVector,
    derive_controls,
    derive_word,
    golden_csr,
    golden_words,
)


def rand_poly(p, r):
    return [r.randrange(p.q) for _ in range(p.n)]


def test_derive_controls_examples():
    s = derive_controls(0b1000)
    assert (s.rd_en, s.wr_en, s.barrett_strt, s.uv_rst, s.polymem_ce) == (True, False, False, False, True)
    s = derive_controls(0b1111)
    assert s.rd_en and s.wr_en and s.barrett_strt and s.uv_strt and s.polymem_ce
    assert not s.uv_rst and not s.barrett_rst
    s = derive_controls(0b0000, rst=True)
    assert s == ControlSignalVector(ctrl_rst=True, ubuff_rst=True, barrett_rst=True, uv_rst=True)


def test_derived_equations_all_csr():
    for csr in range(16):
        c3, c2, c1, c0 = (bool(csr >> b & 1) for b in (3, 2, 1, 0))
        s = derive_controls(csr)
        assert s.uv_rst == (not c3)
        assert s.barrett_strt == (c1 or c2) and s.barrett_rst == (not (c1 or c2))
        assert s.polymem_ce == (c0 or c3)
        assert s.rd_en == c3 and s.wr_en == c0 and s.uv_strt == c0


@pytest.mark.parametrize("N", [1, 4, 12, 1024])
def test_golden_csr_matches_recurrence(N):
    sched = csr_schedule(N)
    assert len(sched) == N + 4
    assert [golden_csr(c, N) for c in range(N + 4)] == sched


def test_fill_asserts_one_signal_per_cycle():
    sched = csr_schedule(1024)
    assert [format(c, "04b") for c in sched[:4]] == ["1000", "1100", "1110", "1111"]
    assert all(c == 0b1111 for c in sched[3:1024])
    assert [format(c, "04b") for c in sched[-4:]] == ["0111", "0011", "0001", "0000"]


@pytest.mark.parametrize("n,q,cycles", [(8, 17, 16), (16, 97, 36), (32, 97, 84), (256, 3329, 1028)])
def test_cycle_count(n, q, cycles):
    p = NttParams.create(n, q)
    o = run(rand_poly(p, random.Random(n)), p)
    assert o.cycles == cycles == o.nominal_cycles


def test_fault_free_equals_golden_exhaustive_small(small):
    # every polynomial of weight one plus random fill covers all read/bypass paths
    r = random.Random(11)
    for i in range(8):
        for v in range(17):
            a = [0] * 8
            a[i] = v
            assert run(a, small).output == ntt_behavioral(a, small)
    for _ in range(300):
        a = rand_poly(small, r)
        assert run(a, small).output == ntt_behavioral(a, small)


def test_fault_free_equals_golden_kyber():
    r = random.Random(12)
    for _ in range(20):
        a = rand_poly(KYBER, r)
        o = run(a, KYBER)
        assert o.output == ntt_behavioral(a, KYBER)
        assert not o.flags.any and o.stats["forwards"] == 0


def test_bypass_only_below_sixteen():
    r = random.Random(1)
    assert run(rand_poly(NttParams.create(8, 17), r), NttParams.create(8, 17)).stats["forwards"] > 0
    for n, q in ((16, 97), (64, 257)):
        p = NttParams.create(n, q)
        assert run(rand_poly(p, r), p).stats["forwards"] == 0


def test_signal_counts_match_schedule():
    o = run([1] * 256, KYBER, debug=True)
    counts = signal_counts(o.trace)
    assert counts["rd_en"] == counts["wr_en"] == 1024
    assert counts["polymem_ce"] == 1027
    rd = [t.cycle for t in o.trace if t.observed & RD_EN]
    assert rd[0] == 0 and rd[-1] == 1023
    assert [t.observed for t in o.trace] == golden_words(1024)


def test_u_buffer_alignment():
    """Each write consumes the U read three clocks earlier for the same butterfly."""
    r = random.Random(2)
    p = NttParams.create(32, 97)
    eng = SecureNtt(p, debug=True)
    eng.load(rand_poly(p, r))
    while not eng.finished:
        eng.step()
    reads = {bid: (c, u) for c, bid, u in eng.read_log}
    assert len(eng.write_log) == p.butterflies
    for w in eng.write_log:
        c, u = reads[w["id"]]
        assert w["cycle"] - c == 3
        assert w["u"] == u


def test_rd_en_gate_corrupts_downstream_write():
    r = random.Random(3)
    a = rand_poly(KYBER, r)
    ref = run(a, KYBER, monitors=MonitorSet.none(), debug=True)
    eng = SecureNtt(KYBER, monitors=MonitorSet.none(), debug=True)
    eng.load(a)
    while not eng.finished:
        eng.step((ALL & ~RD_EN, StuckMode.SA0) if eng.cycle == 500 else None)
    assert not any(c == 500 for c, _, _ in eng.read_log)
    # the butterfly issued at 500 never reaches poly_mem
    assert 500 not in [w["id"] for w in eng.write_log if w["cycle"] == 503]
    assert eng.output() != ref.output


def test_all_ones_gate_is_identity():
    a = rand_poly(KYBER, random.Random(4))
    base = run(a, KYBER, debug=True)
    o = run(a, KYBER, FaultPlan(321, ALL, StuckMode.SA0), debug=True)
    assert [t.observed for t in o.trace] == [t.observed for t in base.trace]
    assert o.output == base.output and not o.flags.any


def test_determinism():
    a = rand_poly(KYBER, random.Random(5))
    plan = FaultPlan(700, 766, StuckMode.SA1)
    x = run(a, KYBER, plan, corrector=Corrector(), mask="per-write", seed=9, debug=True)
    y = run(a, KYBER, plan, corrector=Corrector(), mask="per-write", seed=9, debug=True)
    assert x.to_dict() == y.to_dict()


def test_corrected_single_fault_is_golden():
    r = random.Random(6)
    a = rand_poly(KYBER, r)
    g = ntt_behavioral(a, KYBER)
    o = run(a, KYBER, FaultPlan.on("wr_en", 400), corrector=Corrector(), golden=g)
    assert o.golden_equal and o.flags.cfi_fault and len(o.measures) == 1


def test_two_rollbacks_still_golden():
    a = rand_poly(KYBER, random.Random(7))
    g = ntt_behavioral(a, KYBER)
    plans = [FaultPlan.on("barrett_strt", 100), FaultPlan.on("uv_strt", 900)]
    o = run(a, KYBER, plans, corrector=Corrector(), golden=g)
    assert o.golden_equal and o.stats["rollbacks"] == 2


def test_rollback_replays_same_operands():
    a = rand_poly(KYBER, random.Random(8))
    eng = SecureNtt(KYBER, debug=True)
    eng.load(a)
    corr = Corrector()
    while not eng.finished:
        res = eng.step((ALL & ~RD_EN, StuckMode.SA0) if eng.cycle == 200 else None)
        if res.cfi:
            corr.handle("cfi", eng)
    reads = {}
    for c, bid, u in eng.read_log:
        reads.setdefault(bid, set()).add(u)
    assert all(len(v) == 1 for v in reads.values())
    assert eng.output() == ntt_behavioral(a, KYBER)


def test_step_after_finish_and_unloaded(small):
    eng = SecureNtt(small)
    with pytest.raises(PipelineError):
        eng.step()
    eng.load([0] * 8)
    while not eng.finished:
        eng.step()
    c = eng.cycle
    eng.step()
    assert eng.cycle == c


def test_trace_ring_bounded():
    o = run([0] * 256, KYBER)
    assert len(o.trace) == 16 and o.trace[-1].cycle == 1027


def test_derive_word_matches_vector():
    for csr in range(16):
        assert derive_controls(csr).to_word() == derive_word(csr)
